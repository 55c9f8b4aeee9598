//! Prediction sources: a multinomial softmax classifier trained by
//! full-batch gradient descent, and seeded synthetic noisy classifiers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dataset, LabelAlphabet, LabelId, ModelError, Prediction, PredictionSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("class `{0}` has no training example")]
    MissingClass(String),
    #[error("non-finite feature value in training example {0}")]
    NonFinite(usize),
    #[error("feature dimension {got} does not match model dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("epochs must be at least 1")]
    ZeroEpochs,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("element `{0}` has no ground-truth label")]
    MissingTruth(String),
    #[error("element `{0}` has no correctness probability")]
    MissingProbability(String),
    #[error("correctness probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.1,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), PredictError> {
        if self.epochs == 0 {
            return Err(PredictError::ZeroEpochs);
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(PredictError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(PredictError::Config(format!("l2 {}", self.l2)));
        }
        Ok(())
    }
}

/// Linear softmax classifier: `weights` is K x d, `bias` has length K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub alphabet: LabelAlphabet,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SoftmaxModel {
    pub fn zeros(alphabet: LabelAlphabet, dim: usize) -> Self {
        let k = alphabet.len();
        Self {
            alphabet,
            weights: vec![vec![0.0; dim]; k],
            bias: vec![0.0; k],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        let k = self.alphabet.len();
        if self.weights.len() != k || self.bias.len() != k {
            return Err(PredictError::Malformed(format!(
                "{} weight rows and {} biases for {k} labels",
                self.weights.len(),
                self.bias.len()
            )));
        }
        let d = self.dim();
        if self.weights.iter().any(|r| r.len() != d) {
            return Err(PredictError::Malformed("ragged weight matrix".into()));
        }
        let finite = self.weights.iter().flatten().chain(&self.bias).all(|v| v.is_finite());
        if !finite {
            return Err(PredictError::Malformed("non-finite parameter".into()));
        }
        Ok(())
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, (row, b)) in self.weights.iter().zip(&self.bias).enumerate() {
            out[k] = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Class probabilities for one feature vector.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>, PredictError> {
        if x.len() != self.dim() {
            return Err(PredictError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut p = vec![0.0; self.bias.len()];
        self.logits_into(x, &mut p);
        softmax_in_place(&mut p);
        Ok(p)
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// Most probable label (lowest alphabet index on ties) and its probability.
pub fn predict(model: &SoftmaxModel, x: &[f64]) -> Result<(LabelId, f64), PredictError> {
    let p = model.probabilities(x)?;
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    Ok((LabelId(best), p[best]))
}

/// Mean cross-entropy plus `l2 * ||W||^2` (bias unpenalized), with its
/// gradient with respect to the weights and the bias.
pub fn loss_and_gradient(
    model: &SoftmaxModel,
    features: &[Vec<f64>],
    labels: &[LabelId],
    l2: f64,
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let k = model.bias.len();
    let d = model.dim();
    let n = features.len() as f64;
    let mut grad_w = vec![vec![0.0; d]; k];
    let mut grad_b = vec![0.0; k];
    let mut loss = 0.0;
    let mut p = vec![0.0; k];
    for (x, y) in features.iter().zip(labels) {
        model.logits_into(x, &mut p);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + p.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - p[y.0];
        for c in 0..k {
            let g = (p[c] - lse).exp() - if c == y.0 { 1.0 } else { 0.0 };
            grad_b[c] += g;
            for (gw, xv) in grad_w[c].iter_mut().zip(x) {
                *gw += g * xv;
            }
        }
    }
    let mut penalty = 0.0;
    for c in 0..k {
        grad_b[c] /= n;
        for (gw, w) in grad_w[c].iter_mut().zip(&model.weights[c]) {
            *gw = *gw / n + 2.0 * l2 * w;
            penalty += w * w;
        }
    }
    (loss / n + l2 * penalty, grad_w, grad_b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: SoftmaxModel,
    /// Training loss (standardized features) before each epoch and after the last.
    pub losses: Vec<f64>,
    /// Epochs at which a loss increase was rejected and the step size halved.
    pub halvings: Vec<usize>,
}

/// Tolerance for the per-epoch monotone-loss check.
const LOSS_SLACK: f64 = 1e-9;

/// Trains a softmax classifier by full-batch gradient descent from zero
/// weights on standardized features, then folds the standardization into
/// the returned parameters.
pub fn train_softmax(
    features: &[Vec<f64>],
    labels: &[LabelId],
    alphabet: &LabelAlphabet,
    cfg: &TrainConfig,
) -> Result<SoftmaxModel, PredictError> {
    train_softmax_traced(features, labels, alphabet, cfg).map(|o| o.model)
}

pub fn train_softmax_traced(
    features: &[Vec<f64>],
    labels: &[LabelId],
    alphabet: &LabelAlphabet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, PredictError> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(PredictError::EmptyTrainingSet);
    }
    assert_eq!(features.len(), labels.len(), "features and labels differ in length");
    let d = features[0].len();
    for (i, x) in features.iter().enumerate() {
        if x.len() != d {
            return Err(PredictError::Dimension { expected: d, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PredictError::NonFinite(i));
        }
    }
    let mut seen = vec![false; alphabet.len()];
    for y in labels {
        if !alphabet.contains(*y) {
            return Err(ModelError::LabelOutOfRange(y.0, alphabet.len()).into());
        }
        seen[y.0] = true;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(PredictError::MissingClass(alphabet.name(LabelId(k)).to_string()));
    }

    let n = features.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| features.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = features.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|x| (0..d).map(|j| (x[j] - mean[j]) / scale[j]).collect())
        .collect();

    let mut model = SoftmaxModel::zeros(alphabet.clone(), d);
    let mut lr = cfg.learning_rate;
    let (mut loss, mut gw, mut gb) = loss_and_gradient(&model, &standardized, labels, cfg.l2);
    let mut losses = vec![loss];
    let mut halvings = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut next = model.clone();
        for c in 0..next.bias.len() {
            next.bias[c] -= lr * gb[c];
            for (w, g) in next.weights[c].iter_mut().zip(&gw[c]) {
                *w -= lr * g;
            }
        }
        let (l, ngw, ngb) = loss_and_gradient(&next, &standardized, labels, cfg.l2);
        if l > loss + LOSS_SLACK {
            halvings.push(epoch);
            lr /= 2.0;
        } else {
            model = next;
            loss = l;
            gw = ngw;
            gb = ngb;
        }
        losses.push(loss);
    }

    for c in 0..model.bias.len() {
        let mut shift = 0.0;
        for j in 0..d {
            model.weights[c][j] /= scale[j];
            shift += model.weights[c][j] * mean[j];
        }
        model.bias[c] -= shift;
    }
    Ok(TrainOutcome {
        model,
        losses,
        halvings,
    })
}

/// Per-element or global probability that a synthetic classifier is right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrectProbability {
    Global(f64),
    PerElement(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub correct_probability: CorrectProbability,
    #[serde(default = "yes")]
    pub confidence_calibration: bool,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

/// Smallest confidence emitted for a calibrated prediction with p = 0.
pub const MIN_CONFIDENCE: f64 = 1e-9;

impl SynthConfig {
    pub fn calibrated(p: CorrectProbability, seed: u64) -> Self {
        Self {
            correct_probability: p,
            confidence_calibration: true,
            seed,
        }
    }

    fn probability(&self, id: &str) -> Result<f64, PredictError> {
        let p = match &self.correct_probability {
            CorrectProbability::Global(p) => *p,
            CorrectProbability::PerElement(m) => *m
                .get(id)
                .ok_or_else(|| PredictError::MissingProbability(id.to_string()))?,
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(PredictError::InvalidProbability(p));
        }
        Ok(p)
    }
}

/// One synthetic classifier's predictions over the dataset, in dataset order.
/// `stream` selects an independent random stream for the same seed.
pub fn synth_classifier(dataset: &Dataset, cfg: &SynthConfig, stream: u64) -> Result<Vec<Prediction>, PredictError> {
    let k = dataset.alphabet().len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    dataset
        .elements()
        .iter()
        .map(|e| {
            let truth = e.truth.ok_or_else(|| PredictError::MissingTruth(e.id.clone()))?;
            let p = cfg.probability(&e.id)?;
            let label = if rng.random::<f64>() < p {
                truth
            } else {
                let r = rng.random_range(0..k - 1);
                LabelId(if r >= truth.0 { r + 1 } else { r })
            };
            let confidence = if cfg.confidence_calibration {
                p.max(MIN_CONFIDENCE)
            } else {
                1.0 - 0.5 * rng.random::<f64>()
            };
            Ok(Prediction::new(label, confidence)?)
        })
        .collect()
}

/// `n` independent synthetic classifiers named `synth-1..synth-n`.
pub fn synth_predictions(dataset: &Dataset, n: usize, cfg: &SynthConfig) -> Result<PredictionSet, PredictError> {
    let mut set = PredictionSet::new((1..=n).map(|j| format!("synth-{j}")).collect())?;
    for j in 0..n {
        let preds = synth_classifier(dataset, cfg, j as u64)?;
        for (e, p) in dataset.elements().iter().zip(preds) {
            set.insert(j, &e.id, p)?;
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compute_b, compute_z, Element};
    use rand::Rng;

    fn ab() -> LabelAlphabet {
        LabelAlphabet::new(["A", "B"]).unwrap()
    }

    #[test]
    fn uniform_model_predicts_first_label() {
        let m = SoftmaxModel::zeros(LabelAlphabet::new(["a", "b", "c"]).unwrap(), 2);
        let (l, c) = predict(&m, &[3.0, -1.0]).unwrap();
        assert_eq!(l, LabelId(0));
        assert_eq!(c, 1.0 / 3.0);
        assert!(predict(&m, &[1.0]).is_err());
    }

    #[test]
    fn closed_form_logits() {
        let m = SoftmaxModel {
            alphabet: ab(),
            weights: vec![vec![0.0], vec![0.0]],
            bias: vec![10.0, 0.0],
        };
        let (l, c) = predict(&m, &[0.0]).unwrap();
        assert_eq!(l, LabelId(0));
        assert!((c - 1.0 / (1.0 + (-10.0f64).exp())).abs() < 1e-15);
        assert!((c - 0.9999546).abs() < 1e-7);
    }

    #[test]
    fn probabilities_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = LabelAlphabet::new(["a", "b", "c", "d"]).unwrap();
        for _ in 0..50 {
            let m = SoftmaxModel {
                alphabet: a.clone(),
                weights: (0..4).map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).collect(),
                bias: (0..4).map(|_| rng.random_range(-5.0..5.0)).collect(),
            };
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = m.probabilities(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(p.iter().all(|&v| v >= 0.0));
            let (_, c) = predict(&m, &x).unwrap();
            assert_eq!(c, p.iter().copied().fold(0.0, f64::max));
        }
    }

    #[test]
    fn separable_1d_learns_sign() {
        let mut xs = vec![vec![-1.0]; 50];
        xs.extend(vec![vec![1.0]; 50]);
        let mut ys = vec![LabelId(0); 50];
        ys.extend(vec![LabelId(1); 50]);
        let m = train_softmax(&xs, &ys, &ab(), &TrainConfig::default()).unwrap();
        // decision boundary: logit difference (B - A) must share the sign of x
        let slope = m.weights[1][0] - m.weights[0][0];
        let offset = m.bias[1] - m.bias[0];
        assert!(slope > 0.0);
        assert!((-offset / slope).abs() < 1.0);
        let acc = xs
            .iter()
            .zip(&ys)
            .filter(|(x, y)| predict(&m, x).unwrap().0 == **y)
            .count();
        assert_eq!(acc, 100);
    }

    #[test]
    fn symmetric_data_stays_uniform() {
        let xs = vec![vec![0.3, -2.0]; 10];
        let ys: Vec<LabelId> = (0..10).map(|i| LabelId(i % 2)).collect();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let m = train_softmax(&xs, &ys, &ab(), &cfg).unwrap();
        let (l, c) = predict(&m, &xs[0]).unwrap();
        assert_eq!(l, LabelId(0));
        assert!((c - 0.5).abs() < 1e-15);
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train_softmax(&xs, &ys, &ab(), &zero), Err(PredictError::ZeroEpochs));
    }

    #[test]
    fn training_errors() {
        let xs = vec![vec![1.0], vec![2.0]];
        assert_eq!(
            train_softmax(&xs, &[LabelId(0), LabelId(0)], &ab(), &TrainConfig::default()),
            Err(PredictError::MissingClass("B".into()))
        );
        let bad = vec![vec![1.0], vec![f64::NAN]];
        assert_eq!(
            train_softmax(&bad, &[LabelId(0), LabelId(1)], &ab(), &TrainConfig::default()),
            Err(PredictError::NonFinite(1))
        );
    }

    #[test]
    fn loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = LabelAlphabet::new(["a", "b", "c"]).unwrap();
        let xs: Vec<Vec<f64>> = (0..90).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<LabelId> = (0..90).map(|i| LabelId(i % 3)).collect();
        let out = train_softmax_traced(&xs, &ys, &a, &TrainConfig::default()).unwrap();
        for w in out.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        // an absurd step size triggers halving instead of divergence
        let hot = TrainConfig {
            learning_rate: 1e4,
            ..TrainConfig::default()
        };
        let out = train_softmax_traced(&xs, &ys, &a, &hot).unwrap();
        assert!(!out.halvings.is_empty());
        for w in out.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn model_json_roundtrip() {
        let m = SoftmaxModel {
            alphabet: ab(),
            weights: vec![vec![0.5, -1.0], vec![2.0, 0.25]],
            bias: vec![0.1, -0.1],
        };
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.starts_with(r#"{"alphabet":["A","B"],"weights""#));
        let back: SoftmaxModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        back.validate().unwrap();
    }

    fn truth_dataset(n: usize, k: usize) -> Dataset {
        let a = LabelAlphabet::new((0..k).map(|i| format!("l{i}"))).unwrap();
        let els = (0..n)
            .map(|i| Element::new(format!("e{i}")).with_truth(LabelId(i % k)))
            .collect();
        Dataset::new(els, a).unwrap()
    }

    #[test]
    fn perfect_and_hopeless_synthetic_classifiers() {
        let d = truth_dataset(30, 2);
        let perfect = synth_predictions(&d, 3, &SynthConfig::calibrated(CorrectProbability::Global(1.0), 5)).unwrap();
        let hopeless = synth_predictions(&d, 3, &SynthConfig::calibrated(CorrectProbability::Global(0.0), 5)).unwrap();
        for e in d.elements() {
            let t = e.truth.unwrap();
            assert!(compute_z(&perfect, &e.id).unwrap() && compute_b(&perfect, &e.id, t).unwrap());
            assert_eq!(perfect.get(0, &e.id).unwrap().confidence, 1.0);
            assert!(compute_z(&hopeless, &e.id).unwrap() && !compute_b(&hopeless, &e.id, t).unwrap());
        }
    }

    #[test]
    fn synthetic_requires_truth() {
        let a = ab();
        let d = Dataset::new(vec![Element::new("x")], a).unwrap();
        let cfg = SynthConfig::calibrated(CorrectProbability::Global(0.5), 1);
        assert_eq!(synth_predictions(&d, 1, &cfg), Err(PredictError::MissingTruth("x".into())));
    }

    #[test]
    fn synthetic_is_deterministic_and_streams_differ() {
        let d = truth_dataset(200, 4);
        let cfg = SynthConfig {
            correct_probability: CorrectProbability::Global(0.5),
            confidence_calibration: false,
            seed: 9,
        };
        assert_eq!(synth_classifier(&d, &cfg, 0).unwrap(), synth_classifier(&d, &cfg, 0).unwrap());
        assert_ne!(synth_classifier(&d, &cfg, 0).unwrap(), synth_classifier(&d, &cfg, 1).unwrap());
        for p in synth_classifier(&d, &cfg, 2).unwrap() {
            assert!(p.confidence > 0.5 && p.confidence <= 1.0);
        }
    }
}
