//! Comparison methods that label a fixed budget by hand and predict the
//! rest: a supervised classifier, pseudo-labelling self-training, and a
//! one-dimensional threshold on an ingested per-element score.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{training_data, Oracle, PipelineError};
use crate::model::{Dataset, LabelId};
use crate::predictors::{predict, train_softmax, SoftmaxModel, TrainConfig};
use crate::report::{Assignment, LabelSource, Metrics, RunReport, Timings};
use crate::splitter::{round_count, sample_positions, SplitConfig};

fn default_overfit_gap() -> f64 {
    0.05
}

fn default_max_iterations() -> usize {
    10
}

fn default_min_pts() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Fraction of the dataset labelled by hand.
    pub h_total: f64,
    /// Validation size for pseudo-labelling; defaults to 15% of the labelled sample.
    #[serde(default)]
    pub v: Option<usize>,
    #[serde(default = "default_overfit_gap")]
    pub overfit_gap: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub time_limit_seconds: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dbscan_eps: Option<f64>,
    #[serde(default = "default_min_pts")]
    pub dbscan_min_pts: usize,
}

impl BaselineConfig {
    pub fn new(h_total: f64, seed: u64) -> Self {
        Self {
            h_total,
            v: None,
            overfit_gap: default_overfit_gap(),
            max_iterations: default_max_iterations(),
            time_limit_seconds: None,
            seed,
            dbscan_eps: None,
            dbscan_min_pts: default_min_pts(),
        }
    }

    fn sample_size(&self, size: usize) -> Result<usize, PipelineError> {
        if !(self.h_total > 0.0 && self.h_total <= 1.0) {
            return Err(PipelineError::Config(format!("h_total {} outside (0, 1]", self.h_total)));
        }
        if self.max_iterations == 0 {
            return Err(PipelineError::Config("max_iterations must be at least 1".into()));
        }
        match round_count(self.h_total * size as f64) {
            0 => Err(PipelineError::Config(format!(
                "h_total {} labels no element of {size}",
                self.h_total
            ))),
            n => Ok(n),
        }
    }

    fn validation_size(&self, labelled: usize) -> usize {
        self.v.unwrap_or_else(|| round_count(0.15 * labelled as f64).max(1))
    }

    fn split_config(&self) -> SplitConfig {
        SplitConfig {
            dbscan_eps: self.dbscan_eps,
            dbscan_min_pts: self.dbscan_min_pts,
            ..SplitConfig::new(self.h_total, self.seed)
        }
    }
}

/// Hand-labelled sample (dataset positions with oracle answers) and the
/// positions left for prediction.
struct Budget {
    labelled: Vec<(usize, LabelId)>,
    rest: Vec<usize>,
    split_seconds: f64,
    label_seconds: f64,
}

fn label_budget(dataset: &Dataset, cfg: &BaselineConfig, oracle: &mut dyn Oracle) -> Result<Budget, PipelineError> {
    let count = cfg.sample_size(dataset.len())?;
    let t = Instant::now();
    let picked = sample_positions(dataset, count, &cfg.split_config())?;
    let split_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let ids: Vec<String> = picked.iter().map(|&p| dataset.element(p).id.clone()).collect();
    let labels = oracle.label(&ids)?;
    let mut in_sample = vec![false; dataset.len()];
    for &p in &picked {
        in_sample[p] = true;
    }
    Ok(Budget {
        labelled: picked.into_iter().zip(labels).collect(),
        rest: (0..dataset.len()).filter(|&p| !in_sample[p]).collect(),
        split_seconds,
        label_seconds: t.elapsed().as_secs_f64(),
    })
}

fn report(
    method: &str,
    dataset: &Dataset,
    labelled: &[(usize, LabelId)],
    predicted: &[(usize, LabelId)],
    timings: Timings,
    notes: Vec<String>,
    seed: u64,
) -> RunReport {
    let mut slots: Vec<Option<(LabelId, LabelSource)>> = vec![None; dataset.len()];
    for &(p, l) in labelled {
        slots[p] = Some((l, LabelSource::ManualInitial));
    }
    for &(p, l) in predicted {
        slots[p] = Some((l, LabelSource::Auto));
    }
    let mut correct = 0;
    let assignments = dataset
        .elements()
        .iter()
        .zip(slots)
        .map(|(e, slot)| {
            let (label, source) = slot.expect("every element is labelled or predicted");
            if e.truth == Some(label) {
                correct += 1;
            }
            Assignment {
                id: e.id.clone(),
                label: dataset.alphabet().name(label).to_string(),
                source,
            }
        })
        .collect();
    let size = dataset.len() as f64;
    RunReport {
        method: method.to_string(),
        assignments,
        residual_manual_ids: Vec::new(),
        metrics: Metrics {
            accuracy: dataset.has_full_truth().then(|| correct as f64 / size),
            manual_effort: labelled.len() as f64 / size,
        },
        timings,
        milp: None,
        iterations: Vec::new(),
        notes,
        seed,
    }
}

fn features(dataset: &Dataset, pos: usize) -> Result<&[f64], PipelineError> {
    dataset
        .element(pos)
        .features
        .as_deref()
        .ok_or(PipelineError::MissingFeatures)
}

fn predict_all(dataset: &Dataset, model: &SoftmaxModel, positions: &[usize]) -> Result<Vec<(usize, LabelId)>, PipelineError> {
    positions
        .iter()
        .map(|&p| Ok((p, predict(model, features(dataset, p)?)?.0)))
        .collect()
}

fn fit(dataset: &Dataset, examples: &[(usize, LabelId)], train: &TrainConfig) -> Result<SoftmaxModel, PipelineError> {
    let pairs: Vec<(String, LabelId)> = examples
        .iter()
        .map(|&(p, l)| (dataset.element(p).id.clone(), l))
        .collect();
    let (xs, ys) = training_data(dataset, &pairs)?;
    Ok(train_softmax(&xs, &ys, dataset.alphabet(), train)?)
}

fn accuracy_on(dataset: &Dataset, model: &SoftmaxModel, examples: &[(usize, LabelId)]) -> Result<f64, PipelineError> {
    let mut hits = 0;
    for &(p, l) in examples {
        if predict(model, features(dataset, p)?)?.0 == l {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Trains a softmax classifier on the labelled budget and predicts the rest.
pub fn run_supervised(
    dataset: &Dataset,
    train: &TrainConfig,
    cfg: &BaselineConfig,
    oracle: &mut dyn Oracle,
) -> Result<RunReport, PipelineError> {
    dataset.feature_dim().ok_or(PipelineError::MissingFeatures)?;
    let budget = label_budget(dataset, cfg, oracle)?;
    let t = Instant::now();
    let model = fit(dataset, &budget.labelled, train)?;
    let finetune = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let predicted = predict_all(dataset, &model, &budget.rest)?;
    let timings = Timings {
        split: budget.split_seconds,
        finetune,
        milp: 0.0,
        label: budget.label_seconds + t.elapsed().as_secs_f64(),
    };
    Ok(report("supervised", dataset, &budget.labelled, &predicted, timings, Vec::new(), cfg.seed))
}

/// Self-training: the unlabelled remainder is repeatedly pseudo-labelled and
/// folded into the training set until the model overfits (training accuracy
/// exceeds validation accuracy by more than `overfit_gap`) or the budget runs
/// out. A final prediction pass labels the remainder.
pub fn run_pseudo(
    dataset: &Dataset,
    train: &TrainConfig,
    cfg: &BaselineConfig,
    oracle: &mut dyn Oracle,
) -> Result<RunReport, PipelineError> {
    dataset.feature_dim().ok_or(PipelineError::MissingFeatures)?;
    let count = cfg.sample_size(dataset.len())?;
    let v = cfg.validation_size(count);
    if v >= count {
        return Err(PipelineError::Config(format!(
            "validation size {v} leaves no training data out of {count} labelled elements"
        )));
    }
    let mut budget = label_budget(dataset, cfg, oracle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut shuffled = budget.labelled.clone();
    shuffled.shuffle(&mut rng);
    let (validation, fitting) = shuffled.split_at(v);

    let t = Instant::now();
    let mut model = fit(dataset, fitting, train)?;
    let mut iterations = 0;
    let reason = if budget.rest.is_empty() {
        "nothing to pseudo-label"
    } else {
        loop {
            let pseudo = predict_all(dataset, &model, &budget.rest)?;
            let mut examples = fitting.to_vec();
            examples.extend(pseudo);
            model = fit(dataset, &examples, train)?;
            iterations += 1;
            let gap = accuracy_on(dataset, &model, fitting)? - accuracy_on(dataset, &model, validation)?;
            if gap > cfg.overfit_gap {
                break "overfitting detected";
            }
            if iterations >= cfg.max_iterations {
                break "iteration limit reached";
            }
            if cfg.time_limit_seconds.is_some_and(|s| t.elapsed().as_secs_f64() >= s) {
                break "time limit reached";
            }
        }
    };
    let finetune = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let predicted = predict_all(dataset, &model, &budget.rest)?;
    budget.label_seconds += t.elapsed().as_secs_f64();
    let notes = vec![
        format!("pseudo-labelling: {iterations} retraining rounds, {reason}"),
        format!(
            "overfit_gap {}, max_iterations {}, validation size {v}",
            cfg.overfit_gap, cfg.max_iterations
        ),
    ];
    let timings = Timings {
        split: budget.split_seconds,
        finetune,
        milp: 0.0,
        label: budget.label_seconds,
    };
    Ok(report("pseudo", dataset, &budget.labelled, &predicted, timings, notes, cfg.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Values above the threshold get the second label.
    Above,
    /// Values above the threshold get the first label.
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub threshold: f64,
    pub polarity: Polarity,
}

impl ThresholdRule {
    pub fn apply(&self, value: f64) -> LabelId {
        let above = value > self.threshold;
        match (self.polarity, above) {
            (Polarity::Above, true) | (Polarity::Below, false) => LabelId(1),
            _ => LabelId(0),
        }
    }

    /// Picks the rule with the highest training accuracy. Candidates are
    /// -inf, the midpoints between consecutive distinct values, and +inf,
    /// scanned in ascending order with `Above` before `Below`; the first
    /// maximum wins.
    pub fn fit(examples: &[(f64, LabelId)]) -> ThresholdRule {
        let mut values: Vec<f64> = examples.iter().map(|e| e.0).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut candidates = vec![f64::NEG_INFINITY];
        candidates.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        candidates.push(f64::INFINITY);

        let mut best = ThresholdRule {
            threshold: f64::NEG_INFINITY,
            polarity: Polarity::Above,
        };
        let mut best_hits = None;
        for &threshold in &candidates {
            for polarity in [Polarity::Above, Polarity::Below] {
                let rule = ThresholdRule { threshold, polarity };
                let hits = examples.iter().filter(|&&(x, l)| rule.apply(x) == l).count();
                if best_hits.is_none_or(|b| hits > b) {
                    best = rule;
                    best_hits = Some(hits);
                }
            }
        }
        best
    }
}

/// Binary labelling by thresholding a per-element score.
pub fn run_threshold_baseline(
    dataset: &Dataset,
    metric: &HashMap<String, f64>,
    cfg: &BaselineConfig,
    oracle: &mut dyn Oracle,
) -> Result<(RunReport, ThresholdRule), PipelineError> {
    if dataset.alphabet().len() != 2 {
        return Err(PipelineError::Config(format!(
            "threshold baseline needs exactly two labels, alphabet has {}",
            dataset.alphabet().len()
        )));
    }
    let value = |p: usize| {
        let id = &dataset.element(p).id;
        metric
            .get(id)
            .copied()
            .filter(|v| v.is_finite())
            .ok_or_else(|| PipelineError::Config(format!("no finite metric value for `{id}`")))
    };
    for p in 0..dataset.len() {
        value(p)?;
    }
    let budget = label_budget(dataset, cfg, oracle)?;
    let t = Instant::now();
    let examples = budget
        .labelled
        .iter()
        .map(|&(p, l)| Ok((value(p)?, l)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let rule = ThresholdRule::fit(&examples);
    let finetune = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let predicted = budget
        .rest
        .iter()
        .map(|&p| Ok((p, rule.apply(value(p)?))))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let timings = Timings {
        split: budget.split_seconds,
        finetune,
        milp: 0.0,
        label: budget.label_seconds + t.elapsed().as_secs_f64(),
    };
    let notes = vec![format!("threshold {} ({:?})", rule.threshold, rule.polarity)];
    let r = report("threshold", dataset, &budget.labelled, &predicted, timings, notes, cfg.seed);
    Ok((r, rule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Element, LabelAlphabet};
    use crate::pipeline::TruthOracle;

    fn separable(n: usize) -> Dataset {
        let a = LabelAlphabet::new(["neg", "pos"]).unwrap();
        let els = (0..n)
            .map(|i| {
                let c = i % 2;
                let x = if c == 0 { -1.0 - (i % 5) as f64 * 0.1 } else { 1.0 + (i % 5) as f64 * 0.1 };
                Element::new(format!("e{i:03}"))
                    .with_truth(LabelId(c))
                    .with_features(vec![x, (i % 3) as f64])
            })
            .collect();
        Dataset::new(els, a).unwrap()
    }

    #[test]
    fn supervised_effort_is_budget() {
        let d = separable(200);
        let mut cfg = BaselineConfig::new(0.1, 4);
        cfg.dbscan_eps = Some(10.0);
        let r = run_supervised(&d, &TrainConfig::default(), &cfg, &mut TruthOracle::from_dataset(&d)).unwrap();
        assert_eq!(r.metrics.manual_effort, 0.1);
        assert_eq!(r.metrics.accuracy, Some(1.0));
        r.check_consistency().unwrap();
    }

    #[test]
    fn full_budget_labels_everything_by_hand() {
        let d = separable(40);
        let cfg = BaselineConfig::new(1.0, 4);
        let r = run_supervised(&d, &TrainConfig::default(), &cfg, &mut TruthOracle::from_dataset(&d)).unwrap();
        assert_eq!(r.metrics.manual_effort, 1.0);
        assert_eq!(r.metrics.accuracy, Some(1.0));
    }

    #[test]
    fn zero_budget_is_rejected() {
        let d = separable(40);
        let cfg = BaselineConfig::new(0.0, 4);
        let r = run_supervised(&d, &TrainConfig::default(), &cfg, &mut TruthOracle::from_dataset(&d));
        assert!(matches!(r, Err(PipelineError::Config(_))));
    }

    #[test]
    fn pseudo_respects_iteration_budget() {
        let d = separable(200);
        let mut cfg = BaselineConfig::new(0.2, 4);
        cfg.max_iterations = 1;
        let r = run_pseudo(&d, &TrainConfig::default(), &cfg, &mut TruthOracle::from_dataset(&d)).unwrap();
        assert!(r.notes[0].starts_with("pseudo-labelling: 1 retraining rounds"));
        assert_eq!(r.metrics.manual_effort, 0.2);
        r.check_consistency().unwrap();
    }

    #[test]
    fn pseudo_stops_on_any_gap_when_tolerance_is_negative() {
        let d = separable(200);
        let mut cfg = BaselineConfig::new(0.2, 4);
        cfg.overfit_gap = -1.0;
        let r = run_pseudo(&d, &TrainConfig::default(), &cfg, &mut TruthOracle::from_dataset(&d)).unwrap();
        assert!(r.notes[0].contains("1 retraining rounds, overfitting"));
    }

    #[test]
    fn pseudo_validation_must_leave_training_data() {
        let d = separable(100);
        let mut cfg = BaselineConfig::new(0.1, 4);
        cfg.v = Some(10);
        let r = run_pseudo(&d, &TrainConfig::default(), &cfg, &mut TruthOracle::from_dataset(&d));
        assert!(matches!(r, Err(PipelineError::Config(_))));
    }

    #[test]
    fn default_validation_size() {
        let cfg = BaselineConfig::new(0.2, 0);
        assert_eq!(cfg.validation_size(100), 15);
        assert_eq!(cfg.validation_size(3), 1);
    }

    #[test]
    fn threshold_separates_and_handles_constants() {
        let d = separable(100);
        let metric: HashMap<String, f64> = d
            .elements()
            .iter()
            .map(|e| (e.id.clone(), e.features.as_ref().unwrap()[0]))
            .collect();
        let cfg = BaselineConfig::new(0.2, 1);
        let (r, rule) = run_threshold_baseline(&d, &metric, &cfg, &mut TruthOracle::from_dataset(&d)).unwrap();
        assert_eq!(r.metrics.accuracy, Some(1.0));
        assert_eq!(rule.polarity, Polarity::Above);

        let rule = ThresholdRule::fit(&[(3.0, LabelId(0)), (3.0, LabelId(0)), (3.0, LabelId(1))]);
        assert_eq!(rule.apply(3.0), LabelId(0));
        let rule = ThresholdRule::fit(&[(3.0, LabelId(1)), (3.0, LabelId(0)), (3.0, LabelId(1))]);
        assert_eq!(rule.apply(3.0), LabelId(1));
    }

    #[test]
    fn threshold_requires_binary_alphabet() {
        let a = LabelAlphabet::new(["a", "b", "c"]).unwrap();
        let d = Dataset::new(vec![Element::new("x").with_truth(LabelId(0))], a).unwrap();
        let metric = HashMap::from([("x".to_string(), 1.0)]);
        let r = run_threshold_baseline(&d, &metric, &BaselineConfig::new(0.5, 0), &mut TruthOracle::from_dataset(&d));
        assert!(matches!(r, Err(PipelineError::Config(_))));
    }
}
