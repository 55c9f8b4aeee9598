//! Weight selection as a mixed-integer program.
//!
//! Row `i` of an instance carries the confidence vector `theta_i`, the
//! agreement bit `z_i` and the correctness bit `b_i`. The program picks
//! weights `omega` and indicators `x_i` (row labelled automatically) that
//! minimize the number of manually labelled rows subject to an accuracy
//! floor, with big-M rows linking `x_i` to `theta_i . omega > 1`.

mod bb;
mod brute;
mod mps;
mod one_d;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bb::solve_bb;
pub use brute::{brute_force, BRUTE_FORCE_MAX_ROWS};
pub use mps::{export_mps, parse_mps};
pub use one_d::solve_1d;

/// Tolerance for comparing scores and row activities.
pub(crate) const TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("instance has no rows")]
    NoRows,
    #[error("instance needs at least one classifier")]
    NoClassifiers,
    #[error("row {row}: expected {expected} confidences, found {found}")]
    Dimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: confidence {value} outside (0, 1]")]
    Confidence { row: usize, value: f64 },
    #[error("row {row}: correct but not agreed (b > z)")]
    CorrectWithoutAgreement { row: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("MPS parse error on line {line}: {message}")]
    Mps { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub theta: Vec<f64>,
    pub z: bool,
    pub b: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationInstance {
    n: usize,
    rows: Vec<InstanceRow>,
}

impl OptimizationInstance {
    pub fn new(n: usize, rows: Vec<InstanceRow>) -> Result<Self, MilpError> {
        if n == 0 {
            return Err(MilpError::NoClassifiers);
        }
        if rows.is_empty() {
            return Err(MilpError::NoRows);
        }
        for (i, r) in rows.iter().enumerate() {
            if r.theta.len() != n {
                return Err(MilpError::Dimension {
                    row: i,
                    expected: n,
                    found: r.theta.len(),
                });
            }
            if let Some(&value) = r.theta.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
                return Err(MilpError::Confidence { row: i, value });
            }
            if r.b && !r.z {
                return Err(MilpError::CorrectWithoutAgreement { row: i });
            }
        }
        Ok(Self { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[InstanceRow] {
        &self.rows
    }

    pub fn score(&self, i: usize, omega: &[f64]) -> f64 {
        dot(&self.rows[i].theta, omega)
    }

    fn max_theta(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.theta.iter().copied())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest number of agreed-but-wrong rows that may be labelled
/// automatically: `floor(m (1 - alpha))`.
pub fn wrong_budget(m: usize, alpha: f64) -> usize {
    (m as f64 * (1.0 - alpha) + TOL).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_big_m")]
    pub big_m: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub omega_lower: f64,
    /// Defaults to `(big_m - 1) / n`.
    #[serde(default)]
    pub omega_upper: Option<f64>,
    #[serde(default)]
    pub node_limit: Option<u64>,
    #[serde(default)]
    pub time_limit_seconds: Option<u64>,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_big_m() -> f64 {
    1e6
}

fn default_epsilon() -> f64 {
    1e-6
}

impl Default for MilpConfig {
    fn default() -> Self {
        Self::new(default_alpha())
    }
}

impl MilpConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            big_m: default_big_m(),
            epsilon: default_epsilon(),
            omega_lower: 0.0,
            omega_upper: None,
            node_limit: None,
            time_limit_seconds: None,
        }
    }

    pub fn upper(&self, n: usize) -> f64 {
        self.omega_upper.unwrap_or((self.big_m - 1.0) / n as f64)
    }

    pub fn validate(&self, instance: &OptimizationInstance) -> Result<(), MilpError> {
        let err = |s: String| Err(MilpError::Config(s));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return err(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if !(self.big_m > 0.0 && self.big_m.is_finite()) {
            return err(format!("big-M {} must be positive", self.big_m));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return err(format!("epsilon {} outside (0, 1)", self.epsilon));
        }
        let (lo, hi) = (self.omega_lower, self.upper(instance.n()));
        if !(lo.is_finite() && hi.is_finite()) {
            return err("weight bounds must be finite".into());
        }
        // The all-manual solution omega = 0 must stay inside the box.
        if lo > 0.0 || hi < 0.0 {
            return err(format!("weight bounds [{lo}, {hi}] must contain 0"));
        }
        let n = instance.n() as f64;
        if hi * n * instance.max_theta() - 1.0 > self.big_m {
            return err(format!(
                "big-M {} too small for upper weight bound {hi}",
                self.big_m
            ));
        }
        if lo * n * instance.max_theta() - 1.0 < -self.big_m + self.epsilon {
            return err(format!(
                "big-M {} too small for lower weight bound {lo}",
                self.big_m
            ));
        }
        if let Some(0) = self.node_limit {
            return err("node limit must be positive".into());
        }
        if let Some(0) = self.time_limit_seconds {
            return err("time limit must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs: f64 = self.coeffs.iter().map(|&(j, a)| a * values[j]).sum();
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
        }
    }
}

/// A minimization program over named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
}

impl LinearModel {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant + dot(&self.objective, values)
    }

    pub fn is_feasible(&self, values: &[f64], tol: f64) -> bool {
        values.len() == self.variables.len()
            && self.variables.iter().zip(values).all(|(v, &x)| {
                x >= v.lower - tol
                    && x <= v.upper + tol
                    && (v.kind == VarKind::Continuous || x == 0.0 || x == 1.0)
            })
            && self.constraints.iter().all(|c| c.satisfied(values, tol))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub instance: OptimizationInstance,
    pub config: MilpConfig,
    pub program: LinearModel,
}

impl MilpModel {
    pub fn num_variables(&self) -> usize {
        self.program.num_variables()
    }

    pub fn num_constraints(&self) -> usize {
        self.program.num_constraints()
    }

    /// Column of `omega_j`.
    pub fn omega_column(&self, j: usize) -> usize {
        j
    }

    /// Column of `x_i`.
    pub fn x_column(&self, i: usize) -> usize {
        self.instance.n() + i
    }
}

pub fn formulate(instance: &OptimizationInstance, cfg: &MilpConfig) -> Result<MilpModel, MilpError> {
    cfg.validate(instance)?;
    let (n, m) = (instance.n(), instance.m());
    let (lo, hi) = (cfg.omega_lower, cfg.upper(n));
    let mut variables = Vec::with_capacity(n + m);
    for j in 0..n {
        variables.push(Variable {
            name: format!("W_{}", j + 1),
            kind: VarKind::Continuous,
            lower: lo,
            upper: hi,
        });
    }
    for i in 0..m {
        variables.push(Variable {
            name: format!("X_{}", i + 1),
            kind: VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
        });
    }

    let mut constraints = Vec::with_capacity(2 * m + 1);
    let acc: Vec<(usize, f64)> = instance
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.b != r.z)
        .map(|(i, r)| (n + i, f64::from(u8::from(r.b)) - f64::from(u8::from(r.z))))
        .collect();
    constraints.push(Constraint {
        name: "ACC".into(),
        coeffs: acc,
        sense: Sense::Ge,
        rhs: -(m as f64) * (1.0 - cfg.alpha),
    });
    for (i, r) in instance.rows().iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = r.theta.iter().copied().enumerate().collect();
        coeffs.push((n + i, -cfg.big_m));
        constraints.push(Constraint {
            name: format!("LNK_LE_{}", i + 1),
            coeffs: coeffs.clone(),
            sense: Sense::Le,
            rhs: 1.0,
        });
        constraints.push(Constraint {
            name: format!("LNK_GE_{}", i + 1),
            coeffs,
            sense: Sense::Ge,
            rhs: 1.0 + cfg.epsilon - cfg.big_m,
        });
    }

    let mut objective = vec![0.0; n + m];
    for (i, r) in instance.rows().iter().enumerate() {
        if r.z {
            objective[n + i] = -1.0;
        }
    }
    let mut config = cfg.clone();
    config.omega_upper = Some(hi);
    Ok(MilpModel {
        instance: instance.clone(),
        config,
        program: LinearModel {
            variables,
            constraints,
            objective,
            objective_constant: m as f64,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    Incumbent,
    TrivialFallback,
}

impl MilpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MilpStatus::Optimal => "Optimal",
            MilpStatus::Incumbent => "Incumbent",
            MilpStatus::TrivialFallback => "TrivialFallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub omega: Vec<f64>,
    pub x: Vec<bool>,
    pub manual_count: usize,
    pub lower_bound: f64,
    pub gap: f64,
    pub status: MilpStatus,
    #[serde(default)]
    pub nodes: u64,
}

impl MilpSolution {
    /// The all-manual solution `omega = 0, x = 0`.
    pub fn fallback(instance: &OptimizationInstance) -> Self {
        Self {
            omega: vec![0.0; instance.n()],
            x: vec![false; instance.m()],
            manual_count: instance.m(),
            lower_bound: 0.0,
            gap: instance.m() as f64,
            status: MilpStatus::TrivialFallback,
            nodes: 0,
        }
    }

    /// Column values in model order (`omega` then `x`).
    pub fn values(&self) -> Vec<f64> {
        self.omega
            .iter()
            .copied()
            .chain(self.x.iter().map(|&b| if b { 1.0 } else { 0.0 }))
            .collect()
    }
}

/// `m - sum z_i x_i`.
pub fn manual_count(instance: &OptimizationInstance, x: &[bool]) -> usize {
    instance.m()
        - instance
            .rows()
            .iter()
            .zip(x)
            .filter(|(r, &xi)| r.z && xi)
            .count()
}

pub fn wrong_count(instance: &OptimizationInstance, x: &[bool]) -> usize {
    instance
        .rows()
        .iter()
        .zip(x)
        .filter(|(r, &xi)| r.z && !r.b && xi)
        .count()
}

/// Indicators implied by `omega` under the linking rows, or `None` when
/// some score falls strictly inside `(1, 1 + epsilon)`.
pub(crate) fn indicators(instance: &OptimizationInstance, epsilon: f64, omega: &[f64]) -> Option<Vec<bool>> {
    (0..instance.m())
        .map(|i| {
            let s = instance.score(i, omega);
            if s >= 1.0 + epsilon - TOL {
                Some(true)
            } else if s <= 1.0 + TOL {
                Some(false)
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VerifyFailure {
    Dimension(String),
    OmegaBounds { index: usize, value: f64 },
    Indicator { row: usize, score: f64, x: bool },
    Accuracy { wrong: usize, budget: usize },
    ManualCount { reported: usize, actual: usize },
}

impl std::fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyFailure::Dimension(s) => write!(f, "dimension mismatch: {s}"),
            VerifyFailure::OmegaBounds { index, value } => {
                write!(f, "omega[{index}] = {value} outside bounds")
            }
            VerifyFailure::Indicator { row, score, x } => {
                write!(f, "row {row}: score {score} inconsistent with x = {}", u8::from(*x))
            }
            VerifyFailure::Accuracy { wrong, budget } => {
                write!(f, "{wrong} wrong automatic labels exceed budget {budget}")
            }
            VerifyFailure::ManualCount { reported, actual } => {
                write!(f, "manual count {reported} reported, {actual} actual")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub failures: Vec<VerifyFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Rows named in indicator failures.
    pub fn failed_rows(&self) -> Vec<usize> {
        self.failures
            .iter()
            .filter_map(|f| match f {
                VerifyFailure::Indicator { row, .. } => Some(*row),
                _ => None,
            })
            .collect()
    }
}

pub fn verify(solution: &MilpSolution, instance: &OptimizationInstance, cfg: &MilpConfig) -> VerifyReport {
    let mut failures = Vec::new();
    let (n, m) = (instance.n(), instance.m());
    if solution.omega.len() != n || solution.x.len() != m {
        failures.push(VerifyFailure::Dimension(format!(
            "expected {n} weights and {m} indicators, got {} and {}",
            solution.omega.len(),
            solution.x.len()
        )));
        return VerifyReport { failures };
    }
    let (lo, hi) = (cfg.omega_lower, cfg.upper(n));
    for (j, &w) in solution.omega.iter().enumerate() {
        if !(w >= lo - TOL && w <= hi + TOL) {
            failures.push(VerifyFailure::OmegaBounds { index: j, value: w });
        }
    }
    for i in 0..m {
        let s = instance.score(i, &solution.omega);
        if (s - 1.0).abs() > cfg.epsilon && (s > 1.0) != solution.x[i] {
            failures.push(VerifyFailure::Indicator {
                row: i,
                score: s,
                x: solution.x[i],
            });
        }
    }
    let (wrong, budget) = (wrong_count(instance, &solution.x), wrong_budget(m, cfg.alpha));
    if wrong > budget {
        failures.push(VerifyFailure::Accuracy { wrong, budget });
    }
    let actual = manual_count(instance, &solution.x);
    if actual != solution.manual_count {
        failures.push(VerifyFailure::ManualCount {
            reported: solution.manual_count,
            actual,
        });
    }
    VerifyReport { failures }
}

/// Formulates and solves, using the sorted sweep when there is one classifier.
pub fn solve(instance: &OptimizationInstance, cfg: &MilpConfig) -> Result<MilpSolution, MilpError> {
    if instance.n() == 1 {
        solve_1d(instance, cfg)
    } else {
        Ok(solve_bb(&formulate(instance, cfg)?))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn inst(n: usize, rows: &[(&[f64], u8, u8)]) -> OptimizationInstance {
        OptimizationInstance::new(
            n,
            rows.iter()
                .map(|(t, z, b)| InstanceRow {
                    theta: t.to_vec(),
                    z: *z == 1,
                    b: *b == 1,
                })
                .collect(),
        )
        .unwrap()
    }

    pub(crate) fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> OptimizationInstance {
        let rows = (0..m)
            .map(|_| {
                let z = rng.random::<f64>() < 0.7;
                let b = z && rng.random::<f64>() < 0.8;
                InstanceRow {
                    theta: (0..n).map(|_| 1.0 - rng.random::<f64>()).collect(),
                    z,
                    b,
                }
            })
            .collect();
        OptimizationInstance::new(n, rows).unwrap()
    }

    #[test]
    fn instance_validation() {
        let row = |t: Vec<f64>, z, b| InstanceRow { theta: t, z, b };
        assert_eq!(OptimizationInstance::new(1, vec![]), Err(MilpError::NoRows));
        assert!(matches!(
            OptimizationInstance::new(2, vec![row(vec![0.5], true, true)]),
            Err(MilpError::Dimension { .. })
        ));
        assert!(matches!(
            OptimizationInstance::new(1, vec![row(vec![0.0], true, true)]),
            Err(MilpError::Confidence { .. })
        ));
        assert!(matches!(
            OptimizationInstance::new(1, vec![row(vec![1.5], true, true)]),
            Err(MilpError::Confidence { .. })
        ));
        assert_eq!(
            OptimizationInstance::new(1, vec![row(vec![0.5], false, true)]),
            Err(MilpError::CorrectWithoutAgreement { row: 0 })
        );
    }

    #[test]
    fn config_validation() {
        let i = inst(2, &[(&[1.0, 1.0], 1, 1)]);
        assert!(MilpConfig::new(0.9).validate(&i).is_ok());
        assert!(MilpConfig::new(0.0).validate(&i).is_err());
        assert!(MilpConfig::new(1.1).validate(&i).is_err());
        let mut c = MilpConfig::new(1.0);
        c.epsilon = 1.0;
        assert!(c.validate(&i).is_err());
        let mut c = MilpConfig::new(1.0);
        c.omega_upper = Some(1e6);
        assert!(c.validate(&i).is_err(), "2 * 1e6 - 1 > M");
        let mut c = MilpConfig::new(1.0);
        c.omega_lower = -1e6;
        assert!(c.validate(&i).is_err());
        let mut c = MilpConfig::new(1.0);
        c.omega_lower = 0.5;
        assert!(c.validate(&i).is_err());
        assert_eq!(MilpConfig::new(1.0).upper(2), (1e6 - 1.0) / 2.0);
    }

    #[test]
    fn budget_rounding() {
        assert_eq!(wrong_budget(3, 0.5), 1);
        assert_eq!(wrong_budget(10, 0.9), 1);
        assert_eq!(wrong_budget(100, 0.98), 2);
        assert_eq!(wrong_budget(7, 1.0), 0);
        assert_eq!(wrong_budget(19, 0.95), 0);
    }

    #[test]
    fn structure_counts() {
        let i = inst(2, &[(&[0.9, 0.8], 1, 1), (&[0.2, 0.4], 1, 0), (&[0.5, 0.5], 0, 0)]);
        let model = formulate(&i, &MilpConfig::new(0.9)).unwrap();
        assert_eq!(model.num_variables(), 5);
        assert_eq!(model.num_constraints(), 7);
        let names: Vec<_> = model.program.constraints.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            ["ACC", "LNK_LE_1", "LNK_GE_1", "LNK_LE_2", "LNK_GE_2", "LNK_LE_3", "LNK_GE_3"]
        );
    }

    #[test]
    fn rows_carry_defaults_verbatim() {
        let i = inst(1, &[(&[0.5], 1, 1)]);
        let model = formulate(&i, &MilpConfig::new(1.0)).unwrap();
        let le = &model.program.constraints[1];
        assert_eq!(le.coeffs, vec![(0, 0.5), (1, -1e6)]);
        assert_eq!((le.sense, le.rhs), (Sense::Le, 1.0));
        let ge = &model.program.constraints[2];
        assert_eq!(ge.coeffs, vec![(0, 0.5), (1, -1e6)]);
        assert_eq!((ge.sense, ge.rhs), (Sense::Ge, 1.0 + 1e-6 - 1e6));
        assert_eq!(model.program.variables[0].upper, 1e6 - 1.0);
    }

    #[test]
    fn accuracy_row_at_full_alpha() {
        let i = inst(1, &[(&[0.9], 1, 1), (&[0.8], 1, 0), (&[0.7], 0, 0)]);
        let model = formulate(&i, &MilpConfig::new(1.0)).unwrap();
        let acc = &model.program.constraints[0];
        assert_eq!(acc.coeffs, vec![(2, -1.0)]);
        assert_eq!(acc.rhs, 0.0);
        let model = formulate(&i, &MilpConfig::new(0.5)).unwrap();
        assert_eq!(model.program.constraints[0].rhs, -1.5);
        assert_eq!(model.program.objective, vec![0.0, -1.0, -1.0, 0.0]);
        assert_eq!(model.program.objective_constant, 3.0);
    }

    #[test]
    fn zero_weights_satisfy_every_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..50 {
            let n = 1 + k % 3;
            let i = random_instance(&mut rng, n, 1 + k);
            for alpha in [0.5, 0.9, 1.0] {
                let cfg = MilpConfig::new(alpha);
                let model = formulate(&i, &cfg).unwrap();
                let sol = MilpSolution::fallback(&i);
                assert!(model.program.is_feasible(&sol.values(), 1e-9));
                assert_eq!(model.program.objective_value(&sol.values()), i.m() as f64);
                assert!(verify(&sol, &i, &cfg).passed());
            }
        }
    }

    #[test]
    fn verify_detects_tampering() {
        let i = inst(1, &[(&[0.9], 1, 1), (&[0.8], 1, 0), (&[0.7], 1, 1)]);
        let cfg = MilpConfig::new(1.0);
        let sol = solve_bb(&formulate(&i, &cfg).unwrap());
        assert!(verify(&sol, &i, &cfg).passed());
        let mut bad = sol.clone();
        bad.x[2] = !bad.x[2];
        let report = verify(&bad, &i, &cfg);
        assert!(!report.passed());
        assert_eq!(report.failed_rows(), vec![2]);
        let mut bad = sol.clone();
        bad.manual_count += 1;
        assert!(matches!(
            verify(&bad, &i, &cfg).failures[..],
            [VerifyFailure::ManualCount { .. }]
        ));
        let mut bad = sol;
        bad.omega = vec![1.0 / 0.75];
        bad.x = vec![true, true, false];
        bad.manual_count = 1;
        assert!(matches!(
            verify(&bad, &i, &cfg).failures[..],
            [VerifyFailure::Accuracy { wrong: 1, budget: 0 }]
        ));
    }

    #[test]
    fn verify_is_lenient_inside_band() {
        let i = inst(1, &[(&[0.5], 1, 1)]);
        let cfg = MilpConfig::new(1.0);
        for x in [false, true] {
            let sol = MilpSolution {
                omega: vec![2.0 + 1e-7],
                x: vec![x],
                manual_count: usize::from(!x),
                lower_bound: 0.0,
                gap: 0.0,
                status: MilpStatus::Optimal,
                nodes: 0,
            };
            assert!(verify(&sol, &i, &cfg).passed());
        }
    }

    #[test]
    fn indicator_band() {
        let i = inst(1, &[(&[0.5], 1, 1)]);
        assert_eq!(indicators(&i, 1e-6, &[2.0]), Some(vec![false]));
        assert_eq!(indicators(&i, 1e-6, &[2.0 + 2e-6]), Some(vec![true]));
        assert_eq!(indicators(&i, 1e-6, &[2.0 + 1e-6]), None);
    }
}
