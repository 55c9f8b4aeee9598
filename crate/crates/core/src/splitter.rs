//! Data splitting: density clustering of feature vectors and round-robin
//! sampling across clusters, producing the fine-tuning, optimization and
//! remainder subsets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("point {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error("eps must be positive and finite, got {0}")]
    InvalidEps(f64),
    #[error("minPts must be at least 1")]
    InvalidMinPts,
    #[error("need more than {k} points to estimate eps, got {got}")]
    TooFewPoints { k: usize, got: usize },
    #[error("cannot draw {count} elements from a population of {population}")]
    CountTooLarge { count: usize, population: usize },
    #[error("hInitial must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("sMax must be at least 1")]
    InvalidSMax,
    #[error("optimization subset would be empty (hInitial {h} too small for {size} elements)")]
    EmptyOptimizationSet { h: f64, size: usize },
    #[error("only some elements carry feature vectors")]
    PartialFeatures,
}

/// Slack for products like 0.58 * 100 landing a hair under an integer.
const ROUNDING_SLACK: f64 = 1e-9;

pub(crate) fn floor_count(x: f64) -> usize {
    (x + ROUNDING_SLACK).floor().max(0.0) as usize
}

/// Round half up.
pub(crate) fn round_count(x: f64) -> usize {
    (x + 0.5 + ROUNDING_SLACK).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub h_initial: f64,
    #[serde(default = "default_s_max")]
    pub s_max: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dbscan_eps: Option<f64>,
    #[serde(default = "default_min_pts")]
    pub dbscan_min_pts: usize,
}

fn default_s_max() -> usize {
    1000
}

fn default_min_pts() -> usize {
    4
}

impl SplitConfig {
    pub fn new(h_initial: f64, seed: u64) -> Self {
        Self {
            h_initial,
            s_max: default_s_max(),
            seed,
            dbscan_eps: None,
            dbscan_min_pts: default_min_pts(),
        }
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        if !(self.h_initial > 0.0 && self.h_initial < 1.0) {
            return Err(SplitError::InvalidFraction(self.h_initial));
        }
        if self.s_max == 0 {
            return Err(SplitError::InvalidSMax);
        }
        if let Some(eps) = self.dbscan_eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(SplitError::InvalidEps(eps));
            }
        }
        if self.dbscan_min_pts == 0 {
            return Err(SplitError::InvalidMinPts);
        }
        Ok(())
    }

    /// (|D_t ∪ D_o|, |D_o|) for a dataset of `size` elements.
    pub fn sizes(&self, size: usize) -> (usize, usize) {
        let raw = self.h_initial * size as f64;
        let sampled = round_count(raw);
        let s = self.s_max.min(floor_count(raw / 2.0));
        (sampled, s)
    }
}

/// Cluster index per point; `None` marks noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignment: Vec<Option<usize>>,
    pub clusters: usize,
}

impl Clustering {
    /// Every point in one cluster.
    pub fn single(len: usize) -> Self {
        Self {
            assignment: vec![Some(0); len],
            clusters: usize::from(len > 0),
        }
    }

    pub fn noise_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }

    /// Member lists: clusters in index order, then noise as one extra group.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.clusters];
        let mut noise = Vec::new();
        for (i, a) in self.assignment.iter().enumerate() {
            match a {
                Some(c) => groups[*c].push(i),
                None => noise.push(i),
            }
        }
        if !noise.is_empty() {
            groups.push(noise);
        }
        groups
    }
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(points: &[Vec<f64>]) -> Result<(), SplitError> {
    if let Some(first) = points.first() {
        for (index, p) in points.iter().enumerate() {
            if p.len() != first.len() {
                return Err(SplitError::Dimension {
                    index,
                    expected: first.len(),
                    got: p.len(),
                });
            }
        }
    }
    Ok(())
}

/// DBSCAN with Euclidean distance. A point is core when at least `min_pts`
/// points (itself included) lie within distance `eps`. Clusters are grown
/// from the lowest-index unassigned core point; a border point joins the
/// first cluster that reaches it.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Clustering, SplitError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(SplitError::InvalidEps(eps));
    }
    if min_pts == 0 {
        return Err(SplitError::InvalidMinPts);
    }
    check_dims(points)?;
    let eps2 = eps * eps;
    let m = points.len();

    let core: Vec<bool> = points
        .par_iter()
        .map(|p| points.iter().filter(|q| dist2(p, q) <= eps2).count() >= min_pts)
        .collect();

    let mut assignment: Vec<Option<usize>> = vec![None; m];
    let mut clusters = 0;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..m {
        if assignment[start].is_some() || !core[start] {
            continue;
        }
        let c = clusters;
        clusters += 1;
        assignment[start] = Some(c);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let here = &points[p];
            for (q, other) in points.iter().enumerate() {
                if assignment[q].is_none() && dist2(here, other) <= eps2 {
                    assignment[q] = Some(c);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    Ok(Clustering { assignment, clusters })
}

/// 90th percentile (linear interpolation) of each point's distance to its
/// k-th nearest neighbour.
pub fn estimate_eps(points: &[Vec<f64>], k: usize) -> Result<f64, SplitError> {
    if k == 0 {
        return Err(SplitError::InvalidMinPts);
    }
    if points.len() <= k {
        return Err(SplitError::TooFewPoints { k, got: points.len() });
    }
    check_dims(points)?;
    let mut kth: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| dist2(&points[i], q))
                .collect();
            let (_, v, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            v.sqrt()
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    Ok(percentile(&kth, 0.9))
}

/// Linear-interpolation percentile of sorted values.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Round-robin draw across clusters (noise is one pseudo-cluster), one
/// random unseen element per cluster per pass. Returns point indices in draw
/// order.
pub fn diversified_sample(clustering: &Clustering, count: usize, seed: u64) -> Result<Vec<usize>, SplitError> {
    let population = clustering.assignment.len();
    if count > population {
        return Err(SplitError::CountTooLarge { count, population });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = clustering.groups();
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    let mut cursors = vec![0usize; groups.len()];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        for (g, cur) in groups.iter().zip(cursors.iter_mut()) {
            if out.len() == count {
                break;
            }
            if *cur < g.len() {
                out.push(g[*cur]);
                *cur += 1;
            }
        }
    }
    Ok(out)
}

/// Clusters the dataset's features, or returns one cluster if it has none.
pub fn cluster_dataset(dataset: &Dataset, eps: Option<f64>, min_pts: usize) -> Result<Clustering, SplitError> {
    let Some(_) = dataset.feature_dim() else {
        if dataset.has_any_features() {
            return Err(SplitError::PartialFeatures);
        }
        return Ok(Clustering::single(dataset.len()));
    };
    let points: Vec<Vec<f64>> = dataset
        .elements()
        .iter()
        .map(|e| e.features.clone().unwrap())
        .collect();
    let eps = match eps {
        Some(e) => e,
        None if points.len() > min_pts => estimate_eps(&points, min_pts)?.max(1e-12),
        None => return Ok(Clustering::single(points.len())),
    };
    dbscan(&points, eps, min_pts)
}

/// Diversified sample of `count` dataset positions.
pub fn sample_positions(dataset: &Dataset, count: usize, cfg: &SplitConfig) -> Result<Vec<usize>, SplitError> {
    let clustering = cluster_dataset(dataset, cfg.dbscan_eps, cfg.dbscan_min_pts)?;
    diversified_sample(&clustering, count, cfg.seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub d_t: Vec<String>,
    pub d_o: Vec<String>,
    pub d_prime: Vec<String>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.d_t.len() + self.d_o.len() + self.d_prime.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits the dataset into fine-tuning, optimization and remainder subsets.
pub fn split(dataset: &Dataset, cfg: &SplitConfig) -> Result<Partition, SplitError> {
    cfg.validate()?;
    let size = dataset.len();
    let (sampled, s) = cfg.sizes(size);
    if s == 0 {
        return Err(SplitError::EmptyOptimizationSet { h: cfg.h_initial, size });
    }
    let mut sample = sample_positions(dataset, sampled, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    sample.shuffle(&mut rng);

    let mut in_sample = vec![false; size];
    for &p in &sample {
        in_sample[p] = true;
    }
    let id = |p: usize| dataset.element(p).id.clone();
    Ok(Partition {
        d_o: sample[..s].iter().map(|&p| id(p)).collect(),
        d_t: sample[s..].iter().map(|&p| id(p)).collect(),
        d_prime: (0..size).filter(|&p| !in_sample[p]).map(id).collect(),
    })
}
