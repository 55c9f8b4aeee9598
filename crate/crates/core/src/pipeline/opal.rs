//! Resumable optimize-then-label run. The batch entry points drive it with an
//! [`Oracle`]; the label service drives it with human submissions.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_instance, fit_providers, AlConfig, OpalConfig, Oracle, PipelineError};
use crate::milp::{self, MilpSolution, MilpStatus, OptimizationInstance};
use crate::model::{decide, unanimous_label, Dataset, LabelDecision, LabelId, PredictionSet};
use crate::report::{Assignment, IterationRecord, LabelSource, Metrics, MilpSummary, RunReport, Timings};
use crate::splitter::split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AwaitingInitialLabels,
    Optimizing,
    AwaitingResidualLabels,
    /// Waiting on the human round that follows solve `k`.
    AwaitingIterationLabels(usize),
    Done,
}

/// Live view of a run for dashboards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub phase: Phase,
    pub size: usize,
    pub pending: usize,
    pub manual_labelled: usize,
    pub auto_labelled: usize,
    pub manual_effort: f64,
    /// Fraction of labelled elements whose label matches the known truth.
    pub accuracy: Option<f64>,
    pub omega: Option<Vec<f64>>,
    pub milp: Option<MilpSummary>,
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpalRun {
    config: OpalConfig,
    beta: Option<usize>,
    phase: Phase,
    d_t: Vec<String>,
    d_o: Vec<String>,
    d_prime: Vec<String>,
    queue: Vec<String>,
    drawn: Vec<String>,
    manual: BTreeMap<String, (LabelId, LabelSource)>,
    auto: BTreeMap<String, LabelId>,
    omega: Option<Vec<f64>>,
    milp: Option<MilpSummary>,
    iterations: Vec<IterationRecord>,
    notes: Vec<String>,
    timings: Timings,
    #[serde(skip)]
    last_instance: Option<OptimizationInstance>,
    #[serde(skip)]
    last_solution: Option<MilpSolution>,
    #[serde(skip)]
    last_predictions: Option<PredictionSet>,
}

impl OpalRun {
    /// Splits the dataset and queues the initial subsets for labelling.
    pub fn start(dataset: &Dataset, config: OpalConfig) -> Result<Self, PipelineError> {
        Self::begin(dataset, config, None)
    }

    pub fn start_al(dataset: &Dataset, config: AlConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        Self::begin(dataset, config.base, Some(config.beta))
    }

    fn begin(dataset: &Dataset, config: OpalConfig, beta: Option<usize>) -> Result<Self, PipelineError> {
        config.validate()?;
        let t = Instant::now();
        let part = split(dataset, &config.split)?;
        let queue = part.d_t.iter().chain(&part.d_o).cloned().collect();
        Ok(Self {
            config,
            beta,
            phase: Phase::AwaitingInitialLabels,
            d_t: part.d_t,
            d_o: part.d_o,
            d_prime: part.d_prime,
            queue,
            drawn: Vec::new(),
            manual: BTreeMap::new(),
            auto: BTreeMap::new(),
            omega: None,
            milp: None,
            iterations: Vec::new(),
            notes: Vec::new(),
            timings: Timings {
                split: t.elapsed().as_secs_f64(),
                ..Timings::default()
            },
            last_instance: None,
            last_solution: None,
            last_predictions: None,
        })
    }

    pub fn config(&self) -> &OpalConfig {
        &self.config
    }

    pub fn beta(&self) -> Option<usize> {
        self.beta
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn queue(&self) -> &[String] {
        &self.queue
    }

    pub fn fine_tuning_ids(&self) -> &[String] {
        &self.d_t
    }

    pub fn optimization_ids(&self) -> &[String] {
        &self.d_o
    }

    /// Elements neither labelled nor queued for the current round.
    pub fn remainder_ids(&self) -> &[String] {
        &self.d_prime
    }

    pub fn omega(&self) -> Option<&[f64]> {
        self.omega.as_deref()
    }

    pub fn manual_label(&self, id: &str) -> Option<LabelId> {
        self.manual.get(id).map(|&(l, _)| l)
    }

    /// Instance, solution and predictions of the most recent solve in this
    /// process; not persisted.
    pub fn last_instance(&self) -> Option<&OptimizationInstance> {
        self.last_instance.as_ref()
    }

    pub fn last_solution(&self) -> Option<&MilpSolution> {
        self.last_solution.as_ref()
    }

    pub fn last_predictions(&self) -> Option<&PredictionSet> {
        self.last_predictions.as_ref()
    }

    /// Marks the run as optimizing while a background step is in flight.
    pub fn mark_optimizing(&mut self) {
        self.phase = Phase::Optimizing;
    }

    /// Records human labels for queued ids and returns how many remain.
    /// Resubmitting an identical label is a no-op; nothing is applied if any
    /// pair is rejected.
    pub fn submit(&mut self, dataset: &Dataset, pairs: &[(String, LabelId)]) -> Result<usize, PipelineError> {
        let queued: HashSet<&str> = self.queue.iter().map(String::as_str).collect();
        let mut staged: BTreeMap<&str, LabelId> = BTreeMap::new();
        for (id, label) in pairs {
            if !dataset.alphabet().contains(*label) {
                return Err(crate::model::ModelError::LabelOutOfRange(label.0, dataset.alphabet().len()).into());
            }
            let existing = self
                .manual
                .get(id)
                .map(|&(l, _)| l)
                .or_else(|| staged.get(id.as_str()).copied());
            match existing {
                Some(l) if l == *label => {}
                Some(l) => {
                    return Err(PipelineError::Conflict {
                        id: id.clone(),
                        existing: dataset.alphabet().name(l).to_string(),
                        submitted: dataset.alphabet().name(*label).to_string(),
                    })
                }
                None if queued.contains(id.as_str()) => {
                    staged.insert(id, *label);
                }
                None => return Err(PipelineError::UnknownId(id.clone())),
            }
        }
        let source = match self.phase {
            Phase::AwaitingInitialLabels => LabelSource::ManualInitial,
            _ => LabelSource::ManualResidual,
        };
        for (id, label) in &staged {
            self.manual.insert(id.to_string(), (*label, source));
        }
        let done: HashSet<String> = staged.keys().map(|s| s.to_string()).collect();
        self.queue.retain(|id| !done.contains(id));
        Ok(self.queue.len())
    }

    /// Moves to the next phase once the queue is empty. On error the run is
    /// left unchanged.
    pub fn advance(&mut self, dataset: &Dataset) -> Result<Phase, PipelineError> {
        if self.phase == Phase::Done {
            return Err(PipelineError::AlreadyDone);
        }
        if !self.queue.is_empty() {
            return Err(PipelineError::QueueNotEmpty(self.queue.len()));
        }
        let mut next = self.clone();
        next.step(dataset)?;
        *self = next;
        Ok(self.phase)
    }

    fn step(&mut self, dataset: &Dataset) -> Result<(), PipelineError> {
        match self.phase {
            Phase::AwaitingInitialLabels => self.optimize(dataset, 1),
            Phase::Optimizing => {
                let round = self.iterations.len() + 1;
                self.optimize(dataset, round)
            }
            Phase::AwaitingResidualLabels => {
                self.phase = Phase::Done;
                Ok(())
            }
            Phase::AwaitingIterationLabels(k) => {
                let drawn = std::mem::take(&mut self.drawn);
                let to_t = drawn.len().div_ceil(2);
                self.d_t.extend_from_slice(&drawn[..to_t]);
                self.d_o.extend_from_slice(&drawn[to_t..]);
                if self.d_prime.is_empty() {
                    self.phase = Phase::Done;
                    Ok(())
                } else {
                    self.optimize(dataset, k + 1)
                }
            }
            Phase::Done => Err(PipelineError::AlreadyDone),
        }
    }

    fn labelled(&self, ids: &[String]) -> Result<Vec<(String, LabelId)>, PipelineError> {
        ids.iter()
            .map(|id| {
                self.manual_label(id)
                    .map(|l| (id.clone(), l))
                    .ok_or_else(|| PipelineError::UnknownId(id.clone()))
            })
            .collect()
    }

    fn optimize(&mut self, dataset: &Dataset, round: usize) -> Result<(), PipelineError> {
        let t = Instant::now();
        let training = self.labelled(&self.d_t)?;
        let preds = fit_providers(dataset, &self.config.providers, &training, self.config.split.seed)?;
        preds.ensure_complete(self.d_o.iter().chain(&self.d_prime).map(String::as_str))?;
        self.timings.finetune += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let instance = build_instance(&preds, &self.labelled(&self.d_o)?)?;
        let solution = milp::solve(&instance, &self.config.milp_config())?;
        self.timings.milp += t.elapsed().as_secs_f64();
        if solution.status != MilpStatus::Optimal {
            self.notes.push(format!(
                "solve {round}: {} with gap {}",
                solution.status.as_str(),
                solution.gap
            ));
        }
        if self.d_o.len() > self.config.split.s_max {
            self.notes.push(format!(
                "solve {round}: optimization subset has {} elements, above s_max {}",
                self.d_o.len(),
                self.config.split.s_max
            ));
        }

        let t = Instant::now();
        let mut residual = Vec::new();
        let (mut unanimous, mut auto) = (0, 0);
        for id in &self.d_prime {
            let p = preds.predictions_for(id)?;
            if unanimous_label(&p).is_some() {
                unanimous += 1;
            }
            match decide(&solution.omega, &p)? {
                LabelDecision::Auto(l) => {
                    self.auto.insert(id.clone(), l);
                    auto += 1;
                }
                LabelDecision::Manual => residual.push(id.clone()),
            }
        }

        let queue = match self.beta {
            None => {
                self.d_prime.clear();
                residual
            }
            Some(beta) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.split.seed);
                rng.set_stream(2 + round as u64);
                let mut order: Vec<usize> = (0..residual.len()).collect();
                order.shuffle(&mut rng);
                order.truncate(beta.min(residual.len()));
                let picked: HashSet<usize> = order.iter().copied().collect();
                self.drawn = order.iter().map(|&i| residual[i].clone()).collect();
                self.d_prime = residual
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| !picked.contains(i))
                    .map(|(_, id)| id)
                    .collect();
                self.drawn.clone()
            }
        };
        self.timings.label += t.elapsed().as_secs_f64();

        self.iterations.push(IterationRecord {
            omega: solution.omega.clone(),
            optimization_size: self.d_o.len(),
            fine_tuning_size: self.d_t.len(),
            unanimous,
            auto_labelled: auto,
            residual: queue.len() + self.d_prime.len(),
            queried: queue.len(),
            milp_status: solution.status.as_str().to_string(),
            gap: solution.gap,
        });
        self.milp = Some(MilpSummary {
            status: solution.status.as_str().to_string(),
            gap: solution.gap,
            omega: solution.omega.clone(),
            manual_count: solution.manual_count,
            lower_bound: solution.lower_bound,
            nodes: solution.nodes,
        });
        self.omega = Some(solution.omega.clone());
        self.last_instance = Some(instance);
        self.last_solution = Some(solution);
        self.last_predictions = Some(preds);

        self.phase = match (queue.is_empty(), self.beta) {
            (true, _) => Phase::Done,
            (false, None) => Phase::AwaitingResidualLabels,
            (false, Some(_)) => Phase::AwaitingIterationLabels(round),
        };
        self.queue = queue;
        Ok(())
    }

    fn final_label(&self, id: &str) -> Option<(LabelId, LabelSource)> {
        self.manual
            .get(id)
            .copied()
            .or_else(|| self.auto.get(id).map(|&l| (l, LabelSource::Auto)))
    }

    pub fn progress(&self, dataset: &Dataset) -> Progress {
        let labelled: Vec<(&str, LabelId)> = self
            .manual
            .iter()
            .map(|(id, (l, _))| (id.as_str(), *l))
            .chain(self.auto.iter().map(|(id, l)| (id.as_str(), *l)))
            .collect();
        let with_truth: Vec<bool> = labelled
            .iter()
            .filter_map(|(id, l)| {
                let truth = dataset.element(dataset.position(id)?).truth?;
                Some(truth == *l)
            })
            .collect();
        let accuracy = (!with_truth.is_empty() && dataset.has_full_truth())
            .then(|| with_truth.iter().filter(|&&c| c).count() as f64 / with_truth.len() as f64);
        Progress {
            phase: self.phase,
            size: dataset.len(),
            pending: self.queue.len(),
            manual_labelled: self.manual.len(),
            auto_labelled: self.auto.len(),
            manual_effort: self.manual.len() as f64 / dataset.len() as f64,
            accuracy,
            omega: self.omega.clone(),
            milp: self.milp.clone(),
            iterations: self.iterations.clone(),
        }
    }

    /// Final report; available once the run is done.
    pub fn report(&self, dataset: &Dataset) -> Result<RunReport, PipelineError> {
        if self.phase != Phase::Done {
            return Err(PipelineError::NotDone);
        }
        let mut assignments = Vec::with_capacity(dataset.len());
        let mut residual = Vec::new();
        let mut correct = 0;
        for e in dataset.elements() {
            let (label, source) = self
                .final_label(&e.id)
                .ok_or_else(|| PipelineError::UnknownId(e.id.clone()))?;
            if source == LabelSource::ManualResidual {
                residual.push(e.id.clone());
            }
            if e.truth == Some(label) {
                correct += 1;
            }
            assignments.push(Assignment {
                id: e.id.clone(),
                label: dataset.alphabet().name(label).to_string(),
                source,
            });
        }
        let size = dataset.len() as f64;
        Ok(RunReport {
            method: if self.beta.is_some() { "opal-al" } else { "opal" }.to_string(),
            assignments,
            residual_manual_ids: residual,
            metrics: Metrics {
                accuracy: dataset.has_full_truth().then(|| correct as f64 / size),
                manual_effort: self.manual.len() as f64 / size,
            },
            timings: self.timings,
            milp: self.milp.clone(),
            iterations: self.iterations.clone(),
            notes: self.notes.clone(),
            seed: self.config.split.seed,
        })
    }

    /// Answers every queue from `oracle` and advances until done.
    pub fn drive(&mut self, dataset: &Dataset, oracle: &mut dyn Oracle) -> Result<(), PipelineError> {
        while self.phase != Phase::Done {
            if !self.queue.is_empty() {
                let t = Instant::now();
                let ids = self.queue.clone();
                let labels = oracle.label(&ids)?;
                let pairs: Vec<(String, LabelId)> = ids.into_iter().zip(labels).collect();
                self.submit(dataset, &pairs)?;
                self.timings.label += t.elapsed().as_secs_f64();
            }
            self.advance(dataset)?;
        }
        Ok(())
    }
}

pub fn run_opal(dataset: &Dataset, cfg: &OpalConfig, oracle: &mut dyn Oracle) -> Result<RunReport, PipelineError> {
    let mut run = OpalRun::start(dataset, cfg.clone())?;
    run.drive(dataset, oracle)?;
    run.report(dataset)
}

pub fn run_opal_al(dataset: &Dataset, cfg: &AlConfig, oracle: &mut dyn Oracle) -> Result<RunReport, PipelineError> {
    let mut run = OpalRun::start_al(dataset, cfg.clone())?;
    run.drive(dataset, oracle)?;
    run.report(dataset)
}
