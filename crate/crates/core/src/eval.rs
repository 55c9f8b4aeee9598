//! Metrics recomputed from reports, a seeded synthetic dataset generator, and
//! the experiment-grid runner.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::milp::MilpConfig;
use crate::model::{Dataset, Element, LabelAlphabet, LabelId, ModelError};
use crate::pipeline::{
    run_opal, run_opal_al, run_pseudo, run_supervised, run_threshold_baseline, AlConfig, BaselineConfig,
    OpalConfig, PipelineError, ProviderSpec, TruthOracle,
};
use crate::predictors::{CorrectProbability, SynthConfig, TrainConfig};
use crate::report::RunReport;
use crate::splitter::SplitConfig;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("no ground truth for `{0}`")]
    MissingTruth(String),
    #[error("report labels unknown element `{0}`")]
    UnknownElement(String),
    #[error("invalid specification: {0}")]
    Spec(String),
}

/// Fraction of report labels that match the dataset's truth.
pub fn accuracy(report: &RunReport, dataset: &Dataset) -> Result<f64, EvalError> {
    let mut correct = 0;
    for a in &report.assignments {
        let pos = dataset
            .position(&a.id)
            .ok_or_else(|| EvalError::UnknownElement(a.id.clone()))?;
        let truth = dataset
            .element(pos)
            .truth
            .ok_or_else(|| EvalError::MissingTruth(a.id.clone()))?;
        if dataset.alphabet().name(truth) == a.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / report.assignments.len() as f64)
}

/// Fraction of report elements labelled by hand.
pub fn manual_effort(report: &RunReport) -> f64 {
    let manual = report.assignments.iter().filter(|a| a.source.is_manual()).count();
    manual as f64 / report.assignments.len() as f64
}

fn default_separation() -> f64 {
    10.0
}

fn default_spread() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetSpec {
    pub size: usize,
    pub class_count: usize,
    pub feature_dim: usize,
    pub cluster_count: usize,
    /// Per-element probability that a synthetic classifier is right, drawn
    /// uniformly from `[lo, hi]`.
    pub correct_probability_range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
    /// Distance between neighbouring cluster means.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Standard deviation of each cluster.
    #[serde(default = "default_spread")]
    pub spread: f64,
}

impl SynthDatasetSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let fail = |m: String| Err(EvalError::Spec(m));
        if self.class_count < 2 {
            return fail(format!("class_count {} below 2", self.class_count));
        }
        if self.size < self.class_count {
            return fail(format!("size {} below class_count {}", self.size, self.class_count));
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be positive".into());
        }
        if self.cluster_count < self.class_count {
            return fail(format!(
                "cluster_count {} below class_count {}",
                self.cluster_count, self.class_count
            ));
        }
        let (lo, hi) = self.correct_probability_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return fail(format!("probability range [{lo}, {hi}] outside [0, 1]"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite() && self.separation.is_finite()) {
            return fail("spread and separation must be finite, spread non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: Dataset,
    pub correctness: BTreeMap<String, f64>,
}

/// Gaussian clusters; element `i` belongs to cluster `i mod clusters` and
/// cluster `c` carries class `c mod classes`. Cluster means sit on the
/// coordinate axes, at least `separation` apart.
pub fn gen_synth(spec: &SynthDatasetSpec) -> Result<SynthData, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;
    let means: Vec<Vec<f64>> = (0..spec.cluster_count)
        .map(|c| {
            let mut m = vec![0.0; d];
            m[c % d] = spec.separation * (1 + c / d) as f64;
            m
        })
        .collect();
    let noise = Normal::new(0.0, spec.spread).map_err(|e| EvalError::Spec(e.to_string()))?;
    let width = (spec.class_count - 1).to_string().len();
    let alphabet = LabelAlphabet::new((0..spec.class_count).map(|c| format!("c{c:0width$}")))?;
    let (lo, hi) = spec.correct_probability_range;
    let id_width = spec.size.to_string().len();
    let mut elements = Vec::with_capacity(spec.size);
    let mut correctness = BTreeMap::new();
    for i in 0..spec.size {
        let cluster = i % spec.cluster_count;
        let features = means[cluster].iter().map(|m| m + noise.sample(&mut rng)).collect();
        let p = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let id = format!("s{i:0id_width$}");
        correctness.insert(id.clone(), p);
        elements.push(
            Element::new(id)
                .with_truth(LabelId(cluster % spec.class_count))
                .with_features(features),
        );
    }
    Ok(SynthData {
        dataset: Dataset::new(elements, alphabet)?,
        correctness,
    })
}

/// Paths of the three files written by [`write_synth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub dataset: PathBuf,
    pub features: PathBuf,
    pub correctness: PathBuf,
}

pub const CORRECTNESS_COLUMN: &str = "p";

pub fn write_synth(data: &SynthData, dir: &Path) -> Result<SynthFiles, EvalError> {
    fs::create_dir_all(dir).map_err(IoError::from)?;
    let files = SynthFiles {
        dataset: dir.join("dataset.csv"),
        features: dir.join("features.csv"),
        correctness: dir.join("correctness.csv"),
    };
    io::write_file(&files.dataset, |f| io::write_dataset(f, &data.dataset))?;
    io::write_file(&files.features, |f| io::write_features(f, &data.dataset))?;
    io::write_file(&files.correctness, |f| {
        io::write_id_column(f, CORRECTNESS_COLUMN, data.correctness.iter().map(|(k, v)| (k.clone(), *v)))
    })?;
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Opal,
    OpalAl,
    Supervised,
    Pseudo,
    Threshold,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Opal => "opal",
            Method::OpalAl => "opal-al",
            Method::Supervised => "supervised",
            Method::Pseudo => "pseudo",
            Method::Threshold => "threshold",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Method::Supervised | Method::Pseudo | Method::Threshold)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "opal" => Method::Opal,
            "opal-al" => Method::OpalAl,
            "supervised" => Method::Supervised,
            "pseudo" => Method::Pseudo,
            "threshold" => Method::Threshold,
            other => return Err(format!("unknown method `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDataset {
    pub dataset: PathBuf,
    #[serde(default)]
    pub features: Option<PathBuf>,
    /// `id,p` file of per-element correctness probabilities for synthetic classifiers.
    #[serde(default)]
    pub correctness: Option<PathBuf>,
    /// `id,value` file of the scalar used by the threshold baseline.
    #[serde(default)]
    pub metric: Option<PathBuf>,
    /// Prediction files; a cell with `n` classifiers uses the first `n`.
    #[serde(default)]
    pub predictions: Vec<PathBuf>,
}

fn yes() -> bool {
    true
}

/// Where the grid's `n` classifiers come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierSource {
    /// Simulated classifiers driven by the correctness file, or a global
    /// probability when none is given.
    Synthetic {
        #[serde(default)]
        probability: Option<f64>,
        #[serde(default = "yes")]
        calibrated: bool,
    },
    /// Softmax classifiers; with more than one, each trains on its own bootstrap resample.
    Softmax {
        #[serde(default)]
        train: TrainConfig,
    },
    Files,
}

impl Default for ClassifierSource {
    fn default() -> Self {
        ClassifierSource::Synthetic {
            probability: None,
            calibrated: true,
        }
    }
}

fn default_h_values() -> Vec<f64> {
    vec![0.01, 0.05, 0.15, 0.25, 0.35, 0.45]
}

fn default_counts() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_alphas() -> Vec<f64> {
    vec![1.0]
}

fn default_repetitions() -> usize {
    5
}

fn default_beta() -> usize {
    50
}

fn default_overfit_gap() -> f64 {
    0.05
}

fn default_max_iterations() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub datasets: Vec<GridDataset>,
    #[serde(default = "default_h_values")]
    pub h_initial_values: Vec<f64>,
    #[serde(default = "default_counts")]
    pub classifier_counts: Vec<usize>,
    #[serde(default = "default_alphas")]
    pub alpha_values: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; all available cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub classifiers: ClassifierSource,
    #[serde(default)]
    pub milp: MilpConfig,
    #[serde(default)]
    pub s_max: Option<usize>,
    #[serde(default = "default_beta")]
    pub beta: usize,
    /// Classifier trained by the supervised and pseudo-labelling baselines.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_overfit_gap")]
    pub overfit_gap: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Run optimized cells first and give each baseline cell their mean effort as budget.
    #[serde(default)]
    pub effort_matched: bool,
}

impl GridSpec {
    pub fn new(datasets: Vec<GridDataset>) -> Self {
        serde_json::from_value(serde_json::json!({ "datasets": [] }))
            .map(|s: GridSpec| GridSpec { datasets, ..s })
            .expect("defaults deserialize")
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let fail = |m: &str| Err(EvalError::Spec(m.to_string()));
        if self.datasets.is_empty() {
            return fail("no datasets");
        }
        if self.h_initial_values.is_empty() || self.classifier_counts.is_empty() || self.alpha_values.is_empty() {
            return fail("h_initial_values, classifier_counts and alpha_values must be non-empty");
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1");
        }
        if self.classifier_counts.contains(&0) {
            return fail("classifier counts must be positive");
        }
        if self.workers == Some(0) {
            return fail("workers must be positive");
        }
        Ok(())
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub method: String,
    pub n: usize,
    pub h_initial: f64,
    pub alpha: f64,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub manual_effort: Option<f64>,
    pub milp_seconds: Option<f64>,
    pub total_seconds: Option<f64>,
    pub milp_status: String,
    pub gap: Option<f64>,
}

pub const GRID_HEADER: &str =
    "method,n,h_initial,alpha,seed,accuracy,manual_effort,milp_seconds,total_seconds,milp_status,gap";

/// A single grid run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub dataset: usize,
    pub method: Method,
    pub n: usize,
    pub h_initial: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Manual budget for baselines; defaults to `h_initial`.
    pub h_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    /// Row index and message of every failed cell.
    pub errors: Vec<(usize, String)>,
}

/// A grid dataset with its side files parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub correctness: Option<BTreeMap<String, f64>>,
    pub metric: Option<HashMap<String, f64>>,
    pub predictions: Vec<PathBuf>,
}

pub const METRIC_COLUMN: &str = "value";

pub fn load_grid_dataset(g: &GridDataset) -> Result<LoadedDataset, EvalError> {
    let dataset = io::read_dataset(&g.dataset, g.features.as_deref(), None)?;
    let correctness = g
        .correctness
        .as_deref()
        .map(|p| io::read_file(p, |f| io::read_id_values(f, CORRECTNESS_COLUMN)))
        .transpose()?
        .map(|m| m.into_iter().collect());
    let metric = g
        .metric
        .as_deref()
        .map(|p| io::read_file(p, |f| io::read_id_values(f, METRIC_COLUMN)))
        .transpose()?;
    Ok(LoadedDataset {
        dataset,
        correctness,
        metric,
        predictions: g.predictions.clone(),
    })
}

fn providers(spec: &GridSpec, data: &LoadedDataset, n: usize, seed: u64) -> Result<Vec<ProviderSpec>, EvalError> {
    match &spec.classifiers {
        ClassifierSource::Synthetic {
            probability,
            calibrated,
        } => {
            let correct_probability = match (probability, &data.correctness) {
                (Some(p), _) => CorrectProbability::Global(*p),
                (None, Some(map)) => CorrectProbability::PerElement(map.clone()),
                (None, None) => {
                    return Err(EvalError::Spec(
                        "synthetic classifiers need a correctness file or a global probability".into(),
                    ))
                }
            };
            let config = SynthConfig {
                correct_probability,
                confidence_calibration: *calibrated,
                seed,
            };
            Ok(vec![ProviderSpec::Synthetic { config }; n])
        }
        ClassifierSource::Softmax { train } => Ok(vec![
            ProviderSpec::Softmax {
                train: train.clone(),
                bootstrap: n > 1,
            };
            n
        ]),
        ClassifierSource::Files => {
            if data.predictions.len() < n {
                return Err(EvalError::Spec(format!(
                    "{n} classifiers requested, {} prediction files given",
                    data.predictions.len()
                )));
            }
            Ok(data.predictions[..n]
                .iter()
                .map(|p| ProviderSpec::File { path: p.clone() })
                .collect())
        }
    }
}

fn opal_config(spec: &GridSpec, data: &LoadedDataset, cell: &GridCell) -> Result<OpalConfig, EvalError> {
    let mut split = SplitConfig::new(cell.h_initial, cell.seed);
    if let Some(s) = spec.s_max {
        split.s_max = s;
    }
    let mut cfg = OpalConfig::new(cell.alpha, split, providers(spec, data, cell.n, cell.seed)?);
    cfg.milp = MilpConfig {
        alpha: cell.alpha,
        ..spec.milp.clone()
    };
    Ok(cfg)
}

/// Runs one cell with a ground-truth oracle.
pub fn run_cell(spec: &GridSpec, data: &LoadedDataset, cell: &GridCell) -> Result<RunReport, EvalError> {
    let dataset = &data.dataset;
    let mut oracle = TruthOracle::from_dataset(dataset);
    let baseline = || BaselineConfig {
        overfit_gap: spec.overfit_gap,
        max_iterations: spec.max_iterations,
        ..BaselineConfig::new(cell.h_total.unwrap_or(cell.h_initial), cell.seed)
    };
    Ok(match cell.method {
        Method::Opal => run_opal(dataset, &opal_config(spec, data, cell)?, &mut oracle)?,
        Method::OpalAl => {
            let cfg = AlConfig {
                base: opal_config(spec, data, cell)?,
                beta: spec.beta,
            };
            run_opal_al(dataset, &cfg, &mut oracle)?
        }
        Method::Supervised => run_supervised(dataset, &spec.train, &baseline(), &mut oracle)?,
        Method::Pseudo => run_pseudo(dataset, &spec.train, &baseline(), &mut oracle)?,
        Method::Threshold => {
            let metric = data
                .metric
                .as_ref()
                .ok_or_else(|| EvalError::Spec("threshold baseline needs a metric file".into()))?;
            run_threshold_baseline(dataset, metric, &baseline(), &mut oracle)?.0
        }
    })
}

fn row(cell: &GridCell, result: &Result<RunReport, String>) -> GridRow {
    let mut r = GridRow {
        method: cell.method.as_str().to_string(),
        n: cell.n,
        h_initial: cell.h_initial,
        alpha: cell.alpha,
        seed: cell.seed,
        accuracy: None,
        manual_effort: None,
        milp_seconds: None,
        total_seconds: None,
        milp_status: "error".to_string(),
        gap: None,
    };
    if let Ok(report) = result {
        r.accuracy = report.metrics.accuracy;
        r.manual_effort = Some(report.metrics.manual_effort);
        r.milp_seconds = Some(report.timings.milp);
        r.total_seconds = Some(report.timings.total());
        r.milp_status = report.milp.as_ref().map(|m| m.status.clone()).unwrap_or_default();
        r.gap = report.milp.as_ref().map(|m| m.gap);
    }
    r
}

/// Cells for `method`, in output order: dataset, classifier count, h, alpha,
/// repetition. Baselines use one classifier and ignore the count sweep.
pub fn grid_cells(spec: &GridSpec, method: Method) -> Vec<GridCell> {
    let counts: &[usize] = if method.is_baseline() { &[1] } else { &spec.classifier_counts };
    let mut cells = Vec::new();
    for dataset in 0..spec.datasets.len() {
        for &n in counts {
            for &h_initial in &spec.h_initial_values {
                for &alpha in &spec.alpha_values {
                    for rep in 0..spec.repetitions {
                        cells.push(GridCell {
                            dataset,
                            method,
                            n,
                            h_initial,
                            alpha,
                            seed: spec.base_seed + rep as u64,
                            h_total: None,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn execute(spec: &GridSpec, loaded: &[Result<LoadedDataset, String>], cells: &[GridCell]) -> Vec<Result<RunReport, String>> {
    let run = |cell: &GridCell| match &loaded[cell.dataset] {
        Ok(data) => run_cell(spec, data, cell).map_err(|e| e.to_string()),
        Err(e) => Err(e.clone()),
    };
    let work = || cells.par_iter().map(run).collect();
    match spec.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map(|pool| pool.install(work))
            .unwrap_or_else(|_| cells.iter().map(run).collect()),
        None => work(),
    }
}

/// Runs every cell for `method` and returns rows in cell order. Failed
/// cells become rows with status `error`. In effort-matched mode a
/// baseline method is preceded by the optimized cells whose mean effort
/// per (dataset, n, h, alpha) sets the baseline budget.
pub fn run_grid(spec: &GridSpec, method: Method) -> Result<GridOutcome, EvalError> {
    spec.validate()?;
    let loaded: Vec<Result<LoadedDataset, String>> = spec
        .datasets
        .iter()
        .map(|g| load_grid_dataset(g).map_err(|e| e.to_string()))
        .collect();

    let mut cells = Vec::new();
    let mut results = Vec::new();
    if spec.effort_matched && method.is_baseline() {
        let opal = grid_cells(spec, Method::Opal);
        let opal_results = execute(spec, &loaded, &opal);
        let mut baseline = Vec::new();
        for (group, outcomes) in opal.chunks(spec.repetitions).zip(opal_results.chunks(spec.repetitions)) {
            let efforts: Vec<f64> = outcomes
                .iter()
                .filter_map(|r| r.as_ref().ok().map(|r| r.metrics.manual_effort))
                .collect();
            let mean = (!efforts.is_empty()).then(|| efforts.iter().sum::<f64>() / efforts.len() as f64);
            for c in group {
                baseline.push(GridCell {
                    method,
                    // NaN budgets fail validation and surface as error rows.
                    h_total: Some(mean.unwrap_or(f64::NAN)),
                    ..c.clone()
                });
            }
        }
        let baseline_results = execute(spec, &loaded, &baseline);
        cells.extend(opal);
        cells.extend(baseline);
        results.extend(opal_results);
        results.extend(baseline_results);
    } else {
        cells = grid_cells(spec, method);
        results = execute(spec, &loaded, &cells);
    }

    let rows = cells.iter().zip(&results).map(|(c, r)| row(c, r)).collect();
    let errors = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e.clone())))
        .collect();
    Ok(GridOutcome { rows, errors })
}

pub fn write_rows<W: Write>(w: W, rows: &[GridRow]) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(GRID_HEADER.split(','))
            .map_err(IoError::from)?;
    }
    for r in rows {
        wtr.serialize(r).map_err(IoError::from)?;
    }
    wtr.flush().map_err(IoError::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{predict, train_softmax};
    use crate::report::{Assignment, LabelSource, Metrics, Timings};

    fn spec(size: usize) -> SynthDatasetSpec {
        SynthDatasetSpec {
            size,
            class_count: 3,
            feature_dim: 2,
            cluster_count: 3,
            correct_probability_range: (0.6, 1.0),
            seed: 5,
            separation: default_separation(),
            spread: default_spread(),
        }
    }

    fn toy_report(labels: &[(&str, &str, LabelSource)]) -> RunReport {
        RunReport {
            method: "x".into(),
            assignments: labels
                .iter()
                .map(|&(id, label, source)| Assignment {
                    id: id.into(),
                    label: label.into(),
                    source,
                })
                .collect(),
            residual_manual_ids: Vec::new(),
            metrics: Metrics {
                accuracy: None,
                manual_effort: 0.0,
            },
            timings: Timings::default(),
            milp: None,
            iterations: Vec::new(),
            notes: Vec::new(),
            seed: 0,
        }
    }

    #[test]
    fn one_wrong_label_in_a_hundred() {
        let data = gen_synth(&spec(100)).unwrap();
        let d = &data.dataset;
        let labels: Vec<(String, String)> = d
            .elements()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let t = e.truth.unwrap();
                let l = if i == 0 { LabelId((t.0 + 1) % 3) } else { t };
                (e.id.clone(), d.alphabet().name(l).to_string())
            })
            .collect();
        let rows: Vec<(&str, &str, LabelSource)> = labels
            .iter()
            .map(|(id, l)| (id.as_str(), l.as_str(), LabelSource::Auto))
            .collect();
        let r = toy_report(&rows);
        assert_eq!(accuracy(&r, d).unwrap(), 0.99);
        assert_eq!(manual_effort(&r), 0.0);
    }

    #[test]
    fn accuracy_needs_truth() {
        let a = LabelAlphabet::new(["a", "b"]).unwrap();
        let d = Dataset::new(vec![Element::new("x")], a).unwrap();
        let r = toy_report(&[("x", "a", LabelSource::ManualInitial)]);
        assert!(matches!(accuracy(&r, &d), Err(EvalError::MissingTruth(_))));
        assert_eq!(manual_effort(&r), 1.0);
    }

    #[test]
    fn synthetic_files_round_trip_and_repeat() {
        let mut s = spec(10);
        s.class_count = 2;
        s.cluster_count = 2;
        let dir = tempfile::tempdir().unwrap();
        let data = gen_synth(&s).unwrap();
        let files = write_synth(&data, &dir.path().join("a")).unwrap();
        let again = write_synth(&gen_synth(&s).unwrap(), &dir.path().join("b")).unwrap();
        for (x, y) in [
            (&files.dataset, &again.dataset),
            (&files.features, &again.features),
            (&files.correctness, &again.correctness),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let back = io::read_dataset(&files.dataset, Some(&files.features), None).unwrap();
        assert_eq!(back.len(), 10);
        assert_eq!(back, data.dataset);
    }

    #[test]
    fn separated_clusters_are_learnable() {
        let data = gen_synth(&spec(500)).unwrap();
        let d = &data.dataset;
        let (train, test) = d.elements().split_at(100);
        let xs: Vec<Vec<f64>> = train.iter().map(|e| e.features.clone().unwrap()).collect();
        let ys: Vec<LabelId> = train.iter().map(|e| e.truth.unwrap()).collect();
        let model = train_softmax(&xs, &ys, d.alphabet(), &TrainConfig::default()).unwrap();
        let hits = test
            .iter()
            .filter(|e| predict(&model, e.features.as_ref().unwrap()).unwrap().0 == e.truth.unwrap())
            .count();
        assert!(hits as f64 / test.len() as f64 >= 0.99);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec(10);
        s.correct_probability_range = (0.9, 0.2);
        assert!(gen_synth(&s).is_err());
        let mut s = spec(2);
        s.class_count = 3;
        assert!(gen_synth(&s).is_err());
    }

    fn grid_on_disk(dir: &Path) -> GridSpec {
        let files = write_synth(&gen_synth(&spec(120)).unwrap(), dir).unwrap();
        let mut g = GridSpec::new(vec![GridDataset {
            dataset: files.dataset,
            features: Some(files.features),
            correctness: Some(files.correctness),
            metric: None,
            predictions: Vec::new(),
        }]);
        g.h_initial_values = vec![0.2];
        g.classifier_counts = vec![2];
        g.alpha_values = vec![0.9];
        g.base_seed = 11;
        g
    }

    #[test]
    fn grid_rows_follow_cells() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid_on_disk(dir.path());
        let out = run_grid(&g, Method::Opal).unwrap();
        assert!(out.errors.is_empty(), "{:?}", out.errors);
        let seeds: Vec<u64> = out.rows.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, [11, 12, 13, 14, 15]);
        let mut buf = Vec::new();
        write_rows(&mut buf, &out.rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), GRID_HEADER);
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn default_grid_shape() {
        let g = GridSpec::new(vec![GridDataset {
            dataset: "d.csv".into(),
            features: None,
            correctness: None,
            metric: None,
            predictions: Vec::new(),
        }]);
        assert_eq!(g.h_initial_values, [0.01, 0.05, 0.15, 0.25, 0.35, 0.45]);
        assert_eq!(grid_cells(&g, Method::Opal).len(), 3 * 6 * 5);
        assert_eq!(grid_cells(&g, Method::Supervised).len(), 6 * 5);
    }

    #[test]
    fn failures_become_error_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = grid_on_disk(dir.path());
        g.datasets.push(GridDataset {
            dataset: dir.path().join("missing.csv"),
            features: None,
            correctness: None,
            metric: None,
            predictions: Vec::new(),
        });
        g.repetitions = 2;
        let out = run_grid(&g, Method::Threshold).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out.rows.iter().all(|r| r.milp_status == "error"));
        assert_eq!(out.errors.len(), 4);
    }

    #[test]
    fn effort_matched_baselines_use_mean_effort() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = grid_on_disk(dir.path());
        g.effort_matched = true;
        g.repetitions = 2;
        let out = run_grid(&g, Method::Supervised).unwrap();
        assert!(out.errors.is_empty(), "{:?}", out.errors);
        assert_eq!(out.rows.len(), 4);
        let mean = (out.rows[0].manual_effort.unwrap() + out.rows[1].manual_effort.unwrap()) / 2.0;
        for r in &out.rows[2..] {
            assert_eq!(r.method, "supervised");
            assert!((r.manual_effort.unwrap() - mean).abs() <= 0.5 / 120.0 + 1e-12);
        }
    }
}
