//! Shared domain types: label alphabet, elements and datasets, per-classifier
//! predictions, and the pure agreement/correctness/decision predicates.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("label alphabet needs at least two labels, got {0}")]
    AlphabetTooSmall(usize),
    #[error("duplicate label token `{0}`")]
    DuplicateLabel(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("label index {0} outside alphabet of size {1}")]
    LabelOutOfRange(usize, usize),
    #[error("dataset must contain at least one element")]
    EmptyDataset,
    #[error("duplicate element id `{0}`")]
    DuplicateElement(String),
    #[error("element `{id}` has feature dimension {got}, expected {expected}")]
    FeatureDimension { id: String, expected: usize, got: usize },
    #[error("element `{0}` has a non-finite feature value")]
    NonFiniteFeature(String),
    #[error("confidence {0} outside (0, 1]")]
    InvalidConfidence(f64),
    #[error("prediction for element `{id}` by classifier `{classifier}` is missing")]
    IncompletePrediction { id: String, classifier: String },
    #[error("duplicate prediction for element `{id}` by classifier `{classifier}`")]
    DuplicatePrediction { id: String, classifier: String },
    #[error("unknown classifier `{0}`")]
    UnknownClassifier(String),
    #[error("weight vector has length {weights}, predictions have length {predictions}")]
    Dimension { weights: usize, predictions: usize },
    #[error("at least one classifier is required")]
    NoClassifiers,
}

/// Index of a label inside a [`LabelAlphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelId(pub usize);

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Ordered set of K >= 2 distinct label tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelAlphabet {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelAlphabet {
    pub fn new<I, S>(labels: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(ModelError::AlphabetTooSmall(labels.len()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(ModelError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    /// Builds an alphabet from arbitrary tokens, deduplicated and sorted.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = tokens.into_iter().map(Into::into).collect();
        labels.sort();
        labels.dedup();
        Self::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<LabelId, ModelError> {
        self.index
            .get(token)
            .map(|&i| LabelId(i))
            .ok_or_else(|| ModelError::UnknownLabel(token.to_string()))
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.labels[id.0]
    }

    pub fn contains(&self, id: LabelId) -> bool {
        id.0 < self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> {
        (0..self.labels.len()).map(LabelId)
    }
}

impl TryFrom<Vec<String>> for LabelAlphabet {
    type Error = ModelError;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LabelAlphabet> for Vec<String> {
    fn from(a: LabelAlphabet) -> Self {
        a.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub features: Option<Vec<f64>>,
    pub payload_uri: Option<String>,
    /// Known only in simulation, or where a human already answered.
    pub truth: Option<LabelId>,
}

impl Element {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            features: None,
            payload_uri: None,
            truth: None,
        }
    }

    pub fn with_truth(mut self, truth: LabelId) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = Some(features);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetDoc", into = "DatasetDoc")]
pub struct Dataset {
    elements: Vec<Element>,
    alphabet: LabelAlphabet,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    alphabet: LabelAlphabet,
    elements: Vec<Element>,
}

impl TryFrom<DatasetDoc> for Dataset {
    type Error = ModelError;

    fn try_from(d: DatasetDoc) -> Result<Self, ModelError> {
        Dataset::new(d.elements, d.alphabet)
    }
}

impl From<Dataset> for DatasetDoc {
    fn from(d: Dataset) -> Self {
        DatasetDoc {
            alphabet: d.alphabet,
            elements: d.elements,
        }
    }
}

impl Dataset {
    pub fn new(elements: Vec<Element>, alphabet: LabelAlphabet) -> Result<Self, ModelError> {
        if elements.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let mut index = HashMap::with_capacity(elements.len());
        let mut dim = None;
        for (pos, e) in elements.iter().enumerate() {
            if index.insert(e.id.clone(), pos).is_some() {
                return Err(ModelError::DuplicateElement(e.id.clone()));
            }
            if let Some(t) = e.truth {
                if !alphabet.contains(t) {
                    return Err(ModelError::LabelOutOfRange(t.0, alphabet.len()));
                }
            }
            if let Some(f) = &e.features {
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(ModelError::NonFiniteFeature(e.id.clone()));
                }
                match dim {
                    None => dim = Some(f.len()),
                    Some(d) if d != f.len() => {
                        return Err(ModelError::FeatureDimension {
                            id: e.id.clone(),
                            expected: d,
                            got: f.len(),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            elements,
            alphabet,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, pos: usize) -> &Element {
        &self.elements[pos]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().map(|e| e.id.as_str())
    }

    /// Feature dimension when every element carries features.
    pub fn feature_dim(&self) -> Option<usize> {
        let first = self.elements[0].features.as_ref()?.len();
        self.elements
            .iter()
            .all(|e| e.features.is_some())
            .then_some(first)
    }

    pub fn has_any_features(&self) -> bool {
        self.elements.iter().any(|e| e.features.is_some())
    }

    pub fn has_full_truth(&self) -> bool {
        self.elements.iter().all(|e| e.truth.is_some())
    }
}

/// A single classifier's answer for one element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: LabelId,
    pub confidence: f64,
}

impl Prediction {
    pub fn new(label: LabelId, confidence: f64) -> Result<Self, ModelError> {
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(ModelError::InvalidConfidence(confidence));
        }
        Ok(Self { label, confidence })
    }
}

/// Complete (classifier x element) matrix of predictions, keyed by element id.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    classifiers: Vec<String>,
    element_ids: Vec<String>,
    index: HashMap<String, usize>,
    // element-major: entries[pos * n + j]
    entries: Vec<Option<Prediction>>,
}

impl PredictionSet {
    pub fn new(classifiers: Vec<String>) -> Result<Self, ModelError> {
        if classifiers.is_empty() {
            return Err(ModelError::NoClassifiers);
        }
        Ok(Self {
            classifiers,
            element_ids: Vec::new(),
            index: HashMap::new(),
            entries: Vec::new(),
        })
    }

    /// Number of classifiers.
    pub fn n(&self) -> usize {
        self.classifiers.len()
    }

    pub fn classifiers(&self) -> &[String] {
        &self.classifiers
    }

    pub fn element_ids(&self) -> &[String] {
        &self.element_ids
    }

    pub fn classifier_index(&self, classifier: &str) -> Result<usize, ModelError> {
        self.classifiers
            .iter()
            .position(|c| c == classifier)
            .ok_or_else(|| ModelError::UnknownClassifier(classifier.to_string()))
    }

    pub fn insert(&mut self, classifier: usize, id: &str, p: Prediction) -> Result<(), ModelError> {
        let n = self.n();
        if classifier >= n {
            return Err(ModelError::UnknownClassifier(format!("#{classifier}")));
        }
        let pos = match self.index.get(id) {
            Some(&pos) => pos,
            None => {
                let pos = self.element_ids.len();
                self.element_ids.push(id.to_string());
                self.index.insert(id.to_string(), pos);
                self.entries.extend(std::iter::repeat_n(None, n));
                pos
            }
        };
        let slot = &mut self.entries[pos * n + classifier];
        if slot.is_some() {
            return Err(ModelError::DuplicatePrediction {
                id: id.to_string(),
                classifier: self.classifiers[classifier].clone(),
            });
        }
        *slot = Some(p);
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, classifier: usize, id: &str) -> Option<Prediction> {
        let pos = *self.index.get(id)?;
        self.entries[pos * self.n() + classifier]
    }

    /// All n predictions for `id`, in classifier order.
    pub fn predictions_for(&self, id: &str) -> Result<Vec<Prediction>, ModelError> {
        let n = self.n();
        let missing = |j: usize| ModelError::IncompletePrediction {
            id: id.to_string(),
            classifier: self.classifiers[j].clone(),
        };
        let pos = *self.index.get(id).ok_or_else(|| missing(0))?;
        self.entries[pos * n..(pos + 1) * n]
            .iter()
            .enumerate()
            .map(|(j, p)| p.ok_or_else(|| missing(j)))
            .collect()
    }

    /// Checks that every id has a prediction from every classifier.
    pub fn ensure_complete<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<(), ModelError> {
        for id in ids {
            self.predictions_for(id)?;
        }
        Ok(())
    }

    /// Stacks single-classifier sets (or wider ones) side by side.
    pub fn hstack(parts: &[PredictionSet]) -> Result<Self, ModelError> {
        let classifiers: Vec<String> = parts.iter().flat_map(|p| p.classifiers.iter().cloned()).collect();
        let mut out = Self::new(classifiers)?;
        let mut offset = 0;
        for part in parts {
            for (pos, id) in part.element_ids.iter().enumerate() {
                for j in 0..part.n() {
                    if let Some(p) = part.entries[pos * part.n() + j] {
                        out.insert(offset + j, id, p)?;
                    }
                }
            }
            offset += part.n();
        }
        Ok(out)
    }

    /// Iterates (classifier index, element id, prediction) over present entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &str, Prediction)> + '_ {
        let n = self.n();
        self.entries.iter().enumerate().filter_map(move |(k, p)| {
            p.map(|p| (k % n, self.element_ids[k / n].as_str(), p))
        })
    }
}

/// The shared label when all predictions agree.
pub fn unanimous_label(predictions: &[Prediction]) -> Option<LabelId> {
    let first = predictions.first()?.label;
    predictions.iter().all(|p| p.label == first).then_some(first)
}

/// Agreement predicate: all classifiers predict the same label for `id`.
pub fn compute_z(predictions: &PredictionSet, id: &str) -> Result<bool, ModelError> {
    Ok(unanimous_label(&predictions.predictions_for(id)?).is_some())
}

/// Correctness predicate: classifiers agree and the shared label is `truth`.
pub fn compute_b(predictions: &PredictionSet, id: &str, truth: LabelId) -> Result<bool, ModelError> {
    Ok(unanimous_label(&predictions.predictions_for(id)?) == Some(truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelDecision {
    Auto(LabelId),
    Manual,
}

/// Weighted confidence sum `sum_j weights[j] * confidence_j`.
pub fn weighted_confidence(weights: &[f64], predictions: &[Prediction]) -> Result<f64, ModelError> {
    if weights.len() != predictions.len() {
        return Err(ModelError::Dimension {
            weights: weights.len(),
            predictions: predictions.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(predictions)
        .map(|(w, p)| w * p.confidence)
        .sum())
}

/// Auto-labels iff the classifiers are unanimous and the weighted confidence
/// strictly exceeds 1.
pub fn decide(weights: &[f64], predictions: &[Prediction]) -> Result<LabelDecision, ModelError> {
    let score = weighted_confidence(weights, predictions)?;
    Ok(match unanimous_label(predictions) {
        Some(label) if score > 1.0 => LabelDecision::Auto(label),
        _ => LabelDecision::Manual,
    })
}
