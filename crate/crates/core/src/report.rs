//! Run reports: final per-element labels with their provenance, metrics and timings.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    ManualInitial,
    ManualResidual,
    Auto,
}

impl LabelSource {
    pub fn is_manual(self) -> bool {
        !matches!(self, LabelSource::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: String,
    pub label: String,
    pub source: LabelSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Present only when ground truth is known for every element.
    pub accuracy: Option<f64>,
    pub manual_effort: f64,
}

/// Wall-clock seconds per pipeline step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub split: f64,
    pub finetune: f64,
    pub milp: f64,
    pub label: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.split + self.finetune + self.milp + self.label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSummary {
    pub status: String,
    pub gap: f64,
    pub omega: Vec<f64>,
    pub manual_count: usize,
    pub lower_bound: f64,
    pub nodes: u64,
}

/// One optimize-then-label round (a plain run has exactly one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub omega: Vec<f64>,
    pub optimization_size: usize,
    pub fine_tuning_size: usize,
    /// Remainder elements on which all classifiers agree.
    pub unanimous: usize,
    pub auto_labelled: usize,
    pub residual: usize,
    pub queried: usize,
    pub milp_status: String,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub assignments: Vec<Assignment>,
    pub residual_manual_ids: Vec<String>,
    pub metrics: Metrics,
    pub timings: Timings,
    pub milp: Option<MilpSummary>,
    #[serde(default)]
    pub iterations: Vec<IterationRecord>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub seed: u64,
}

impl RunReport {
    pub fn count(&self, source: LabelSource) -> usize {
        self.assignments.iter().filter(|a| a.source == source).count()
    }

    pub fn manual_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.source.is_manual()).count()
    }

    /// Checks that assignments cover distinct ids and that the effort metric
    /// matches the manual sources.
    pub fn check_consistency(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for a in &self.assignments {
            if !seen.insert(a.id.as_str()) {
                return Err(format!("element `{}` assigned twice", a.id));
            }
        }
        let residual: HashSet<&str> = self.residual_manual_ids.iter().map(String::as_str).collect();
        for a in &self.assignments {
            let listed = residual.contains(a.id.as_str());
            if listed != (a.source == LabelSource::ManualResidual) {
                return Err(format!("residual set disagrees with source of `{}`", a.id));
            }
        }
        let effort = self.manual_count() as f64 / self.assignments.len() as f64;
        if effort != self.metrics.manual_effort {
            return Err(format!(
                "manual effort {} does not match sources ({})",
                self.metrics.manual_effort, effort
            ));
        }
        Ok(())
    }

    /// JSON with wall-clock timings zeroed, so reruns compare byte for byte.
    pub fn reproducible_json(&self) -> String {
        let mut copy = self.clone();
        copy.timings = Timings::default();
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
