//! End-to-end labelling procedures: the optimized run (optionally with
//! active-learning rounds) and the baselines it is compared against.

mod baselines;
mod opal;

use std::collections::HashMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::milp::{InstanceRow, MilpConfig, MilpError, OptimizationInstance};
use crate::model::{
    decide, unanimous_label, Dataset, LabelDecision, LabelId, ModelError, Prediction, PredictionSet,
};
use crate::predictors::{self, PredictError, SynthConfig, TrainConfig, MIN_CONFIDENCE};
use crate::splitter::{SplitConfig, SplitError};

pub use baselines::{
    run_pseudo, run_supervised, run_threshold_baseline, BaselineConfig, Polarity, ThresholdRule,
};
pub use opal::{run_opal, run_opal_al, OpalRun, Phase, Progress};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("oracle has no label for `{0}`")]
    Oracle(String),
    #[error("`{0}` is not awaiting a label")]
    UnknownId(String),
    #[error("`{id}` already labelled `{existing}`, got `{submitted}`")]
    Conflict {
        id: String,
        existing: String,
        submitted: String,
    },
    #[error("{0} labels still pending")]
    QueueNotEmpty(usize),
    #[error("run is already complete")]
    AlreadyDone,
    #[error("run is not complete yet")]
    NotDone,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trainable classifiers need feature vectors for every element")]
    MissingFeatures,
}

/// Answers manual-label requests.
pub trait Oracle {
    fn label(&mut self, ids: &[String]) -> Result<Vec<LabelId>, PipelineError>;
}

/// Simulated labeller answering from known ground truth.
#[derive(Debug, Clone, Default)]
pub struct TruthOracle {
    truth: HashMap<String, LabelId>,
    queried: usize,
}

impl TruthOracle {
    pub fn new(truth: HashMap<String, LabelId>) -> Self {
        Self { truth, queried: 0 }
    }

    /// Uses the truth attached to the dataset's elements.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::new(
            dataset
                .elements()
                .iter()
                .filter_map(|e| Some((e.id.clone(), e.truth?)))
                .collect(),
        )
    }

    /// Number of labels handed out so far.
    pub fn queried(&self) -> usize {
        self.queried
    }
}

impl Oracle for TruthOracle {
    fn label(&mut self, ids: &[String]) -> Result<Vec<LabelId>, PipelineError> {
        let out = ids
            .iter()
            .map(|id| self.truth.get(id).copied().ok_or_else(|| PipelineError::Oracle(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.queried += out.len();
        Ok(out)
    }
}

/// Source of one or more classifiers' predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderSpec {
    /// Prediction CSV; contributes every classifier listed in the file.
    File { path: PathBuf },
    /// Simulated classifier; the provider's position selects its random stream.
    Synthetic { config: SynthConfig },
    /// Softmax classifier trained on the fine-tuning subset. With
    /// `bootstrap`, it trains on a seeded resample so that several such
    /// providers differ.
    Softmax {
        #[serde(default)]
        train: TrainConfig,
        #[serde(default)]
        bootstrap: bool,
    },
    /// Predictions already in memory.
    #[serde(skip)]
    Fixed(PredictionSet),
}

fn default_beta() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpalConfig {
    pub alpha: f64,
    pub split: SplitConfig,
    /// Solver settings; its `alpha` is replaced by the run's.
    #[serde(default)]
    pub milp: MilpConfig,
    pub providers: Vec<ProviderSpec>,
}

impl OpalConfig {
    pub fn new(alpha: f64, split: SplitConfig, providers: Vec<ProviderSpec>) -> Self {
        Self {
            alpha,
            split,
            milp: MilpConfig::new(alpha),
            providers,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(PipelineError::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.providers.is_empty() {
            return Err(PipelineError::Config("at least one provider is required".into()));
        }
        self.split.validate()?;
        Ok(())
    }

    pub fn milp_config(&self) -> MilpConfig {
        MilpConfig {
            alpha: self.alpha,
            ..self.milp.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub base: OpalConfig,
    #[serde(default = "default_beta")]
    pub beta: usize,
}

impl AlConfig {
    pub fn new(base: OpalConfig) -> Self {
        Self {
            base,
            beta: default_beta(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.beta == 0 {
            return Err(PipelineError::Config("beta must be at least 1".into()));
        }
        self.base.validate()
    }
}

/// Feature vectors and labels of `training`, or an error if features are absent.
pub(crate) fn training_data(
    dataset: &Dataset,
    training: &[(String, LabelId)],
) -> Result<(Vec<Vec<f64>>, Vec<LabelId>), PipelineError> {
    dataset.feature_dim().ok_or(PipelineError::MissingFeatures)?;
    let mut xs = Vec::with_capacity(training.len());
    let mut ys = Vec::with_capacity(training.len());
    for (id, label) in training {
        let pos = dataset.position(id).ok_or_else(|| PipelineError::UnknownId(id.clone()))?;
        xs.push(dataset.element(pos).features.clone().ok_or(PipelineError::MissingFeatures)?);
        ys.push(*label);
    }
    Ok((xs, ys))
}

/// One classifier's predictions for every dataset element.
pub(crate) fn softmax_predictions(
    dataset: &Dataset,
    model: &predictors::SoftmaxModel,
    name: String,
) -> Result<PredictionSet, PipelineError> {
    let mut set = PredictionSet::new(vec![name])?;
    for e in dataset.elements() {
        let x = e.features.as_ref().ok_or(PipelineError::MissingFeatures)?;
        let (label, p) = predictors::predict(model, x)?;
        set.insert(0, &e.id, Prediction::new(label, p.clamp(MIN_CONFIDENCE, 1.0))?)?;
    }
    Ok(set)
}

/// Resolves every provider into one prediction matrix over the dataset.
/// Trainable providers fit on `training` (the labelled fine-tuning subset).
pub fn fit_providers(
    dataset: &Dataset,
    specs: &[ProviderSpec],
    training: &[(String, LabelId)],
    seed: u64,
) -> Result<PredictionSet, PipelineError> {
    let mut parts = Vec::with_capacity(specs.len());
    for (k, spec) in specs.iter().enumerate() {
        let part = match spec {
            ProviderSpec::Fixed(set) => set.clone(),
            ProviderSpec::File { path } => io::read_predictions(&[path.as_path()], dataset.alphabet())?,
            ProviderSpec::Synthetic { config } => {
                let preds = predictors::synth_classifier(dataset, config, k as u64)?;
                let mut set = PredictionSet::new(vec![format!("synth-{}", k + 1)])?;
                for (e, p) in dataset.elements().iter().zip(preds) {
                    set.insert(0, &e.id, p)?;
                }
                set
            }
            ProviderSpec::Softmax { train, bootstrap } => {
                let (mut xs, mut ys) = training_data(dataset, training)?;
                if *bootstrap && !xs.is_empty() {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(100 + k as u64);
                    let picks: Vec<usize> = (0..xs.len()).map(|_| rng.random_range(0..xs.len())).collect();
                    xs = picks.iter().map(|&i| xs[i].clone()).collect();
                    ys = picks.iter().map(|&i| ys[i]).collect();
                }
                let model = predictors::train_softmax(&xs, &ys, dataset.alphabet(), train)?;
                softmax_predictions(dataset, &model, format!("softmax-{}", k + 1))?
            }
        };
        parts.push(part);
    }
    Ok(PredictionSet::hstack(&parts)?)
}

/// Rows `(theta, z, b)` for the labelled optimization subset.
pub fn build_instance(
    predictions: &PredictionSet,
    labelled: &[(String, LabelId)],
) -> Result<OptimizationInstance, PipelineError> {
    let rows = labelled
        .iter()
        .map(|(id, truth)| {
            let preds = predictions.predictions_for(id)?;
            let shared = unanimous_label(&preds);
            Ok(InstanceRow {
                theta: preds.iter().map(|p| p.confidence).collect(),
                z: shared.is_some(),
                b: shared == Some(*truth),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(OptimizationInstance::new(predictions.n(), rows)?)
}

/// Per-element decision under weights `omega`, in the order of `ids`.
pub fn apply_weights(
    predictions: &PredictionSet,
    omega: &[f64],
    ids: &[String],
) -> Result<Vec<LabelDecision>, PipelineError> {
    ids.iter()
        .map(|id| Ok(decide(omega, &predictions.predictions_for(id)?)?))
        .collect()
}
