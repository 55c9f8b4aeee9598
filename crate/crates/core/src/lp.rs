//! Dense bounded-variable primal simplex.
//!
//! Each row `i` introduces an activity variable `r_i = sum_j a_ij x_j` with
//! bounds `[row.lower, row.upper]`, so every constraint is a variable bound.
//! The dictionary expresses the basic variables as linear combinations of
//! the nonbasic ones; phase one minimizes the sum of bound violations of the
//! basic variables. Pricing is Dantzig's rule, switching to Bland's rule
//! after a degenerate pivot.

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl LpRow {
    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self {
            coeffs,
            lower: f64::NEG_INFINITY,
            upper: rhs,
        }
    }

    pub fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self {
            coeffs,
            lower: rhs,
            upper: f64::INFINITY,
        }
    }
}

/// `minimize objective . x  s.t.  rows, lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LinearProgram {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self {
            objective: vec![0.0; lower.len()],
            lower,
            upper,
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

struct Dictionary {
    ncols: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Variable held by each dictionary row.
    basic: Vec<usize>,
    /// Variable held by each dictionary column.
    nonbasic: Vec<usize>,
    /// basic[i] = sum_c d[i * ncols + c] * nonbasic[c]
    d: Vec<f64>,
    value: Vec<f64>,
}

enum Step {
    Done,
    Unbounded,
    Moved { degenerate: bool },
}

impl Dictionary {
    fn new(lp: &LinearProgram) -> Self {
        let nx = lp.num_vars();
        let nr = lp.rows.len();
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        for r in &lp.rows {
            lower.push(r.lower);
            upper.push(r.upper);
        }
        let mut d = vec![0.0; nr * nx];
        for (i, r) in lp.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                d[i * nx + j] += a;
            }
        }
        let mut value = vec![0.0; nx + nr];
        for j in 0..nx {
            value[j] = if lower[j].is_finite() {
                lower[j]
            } else if upper[j].is_finite() {
                upper[j]
            } else {
                0.0
            };
        }
        let mut dict = Self {
            ncols: nx,
            lower,
            upper,
            basic: (nx..nx + nr).collect(),
            nonbasic: (0..nx).collect(),
            d,
            value,
        };
        dict.refresh_basic_values();
        dict
    }

    fn refresh_basic_values(&mut self) {
        let nc = self.ncols;
        for i in 0..self.basic.len() {
            let row = &self.d[i * nc..(i + 1) * nc];
            let v: f64 = row.iter().zip(&self.nonbasic).map(|(a, &k)| a * self.value[k]).sum();
            self.value[self.basic[i]] = v;
        }
    }

    fn tol(bound: f64) -> f64 {
        FEAS_TOL * (1.0 + bound.abs())
    }

    fn below(&self, k: usize) -> bool {
        self.value[k] < self.lower[k] - Self::tol(self.lower[k])
    }

    fn above(&self, k: usize) -> bool {
        self.value[k] > self.upper[k] + Self::tol(self.upper[k])
    }

    fn infeasibility(&self) -> f64 {
        self.basic
            .iter()
            .map(|&k| {
                if self.below(k) {
                    self.lower[k] - self.value[k]
                } else if self.above(k) {
                    self.value[k] - self.upper[k]
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Costs per basic row (phase one: violation gradient; phase two: objective).
    fn basic_costs(&self, objective: Option<&[f64]>) -> Vec<f64> {
        self.basic
            .iter()
            .map(|&k| match objective {
                Some(c) => c.get(k).copied().unwrap_or(0.0),
                None if self.below(k) => -1.0,
                None if self.above(k) => 1.0,
                None => 0.0,
            })
            .collect()
    }

    fn step(&mut self, objective: Option<&[f64]>, bland: bool) -> Step {
        let nc = self.ncols;
        let cb = self.basic_costs(objective);
        let phase_one = objective.is_none();

        // pricing
        let mut entering: Option<(usize, f64, f64)> = None; // (column, direction, score)
        for c in 0..nc {
            let k = self.nonbasic[c];
            if self.upper[k] - self.lower[k] <= 0.0 {
                continue;
            }
            let mut dc = objective.map_or(0.0, |o| o.get(k).copied().unwrap_or(0.0));
            for (i, &cbi) in cb.iter().enumerate() {
                if cbi != 0.0 {
                    dc += cbi * self.d[i * nc + c];
                }
            }
            let at_lower = self.value[k] <= self.lower[k];
            let at_upper = self.value[k] >= self.upper[k];
            let dir = if dc < -DUAL_TOL && !at_upper {
                1.0
            } else if dc > DUAL_TOL && !at_lower {
                -1.0
            } else {
                continue;
            };
            let better = match entering {
                None => true,
                Some((c0, _, s0)) => {
                    if bland {
                        k < self.nonbasic[c0]
                    } else {
                        dc.abs() > s0
                    }
                }
            };
            if better {
                entering = Some((c, dir, dc.abs()));
            }
        }
        let Some((c, dir, _)) = entering else {
            return Step::Done;
        };
        let k_in = self.nonbasic[c];

        // ratio test
        let own = if dir > 0.0 {
            self.upper[k_in] - self.value[k_in]
        } else {
            self.value[k_in] - self.lower[k_in]
        };
        let mut best_t = own;
        let mut leave: Option<(usize, f64)> = None; // (row, bound value)
        let mut best_alpha = 0.0f64;
        for i in 0..self.basic.len() {
            let alpha = self.d[i * nc + c] * dir;
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let k = self.basic[i];
            let v = self.value[k];
            let target = if alpha > 0.0 {
                if phase_one && self.below(k) {
                    self.lower[k]
                } else if phase_one && self.above(k) {
                    continue;
                } else {
                    self.upper[k]
                }
            } else if phase_one && self.above(k) {
                self.upper[k]
            } else if phase_one && self.below(k) {
                continue;
            } else {
                self.lower[k]
            };
            if !target.is_finite() {
                continue;
            }
            let t = ((target - v) / alpha).max(0.0);
            let replace = if t < best_t - 1e-12 {
                true
            } else if t <= best_t + 1e-12 {
                match leave {
                    // ties with the entering variable's own bound: flip instead
                    None => false,
                    Some((i0, _)) if bland => k < self.basic[i0],
                    Some(_) => alpha.abs() > best_alpha,
                }
            } else {
                false
            };
            if replace {
                best_t = t.min(best_t);
                leave = Some((i, target));
                best_alpha = alpha.abs();
            }
        }
        if !best_t.is_finite() {
            return Step::Unbounded;
        }
        let degenerate = best_t <= 1e-12;
        match leave {
            None => {
                // bound flip
                self.value[k_in] = if dir > 0.0 { self.upper[k_in] } else { self.lower[k_in] };
            }
            Some((r, bound)) => {
                let k_out = self.basic[r];
                self.value[k_in] += dir * best_t;
                self.pivot(r, c);
                self.value[k_out] = bound;
            }
        }
        self.refresh_basic_values();
        Step::Moved { degenerate }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let nc = self.ncols;
        let piv = self.d[r * nc + c];
        let mut new_row: Vec<f64> = self.d[r * nc..(r + 1) * nc].iter().map(|a| -a / piv).collect();
        new_row[c] = 1.0 / piv;
        for i in 0..self.basic.len() {
            if i == r {
                continue;
            }
            let f = self.d[i * nc + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.d[i * nc..(i + 1) * nc];
            for (cc, v) in row.iter_mut().enumerate() {
                if cc == c {
                    *v = f * new_row[c];
                } else {
                    *v += f * new_row[cc];
                }
            }
        }
        self.d[r * nc..(r + 1) * nc].copy_from_slice(&new_row);
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[c]);
    }

    fn run(&mut self, objective: Option<&[f64]>, limit: usize, iterations: &mut usize) -> Option<Step> {
        let mut bland = false;
        loop {
            if *iterations >= limit {
                return None;
            }
            *iterations += 1;
            match self.step(objective, bland) {
                Step::Moved { degenerate } => bland = degenerate,
                other => return Some(other),
            }
        }
    }
}

/// Solves `lp` from scratch.
pub fn solve(lp: &LinearProgram) -> LpSolution {
    let nx = lp.num_vars();
    for j in 0..nx {
        if lp.lower[j] > lp.upper[j] {
            return LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                iterations: 0,
            };
        }
    }
    let mut dict = Dictionary::new(lp);
    let limit = 100 * (nx + lp.rows.len()) + 1000;
    let mut iterations = 0;
    let finish = |dict: &Dictionary, status, iterations| {
        let x = dict.value[..nx].to_vec();
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        LpSolution {
            status,
            x,
            objective,
            iterations,
        }
    };

    match dict.run(None, limit, &mut iterations) {
        None => return finish(&dict, LpStatus::IterationLimit, iterations),
        Some(_) if dict.infeasibility() > 0.0 => return finish(&dict, LpStatus::Infeasible, iterations),
        Some(_) => {}
    }
    let status = match dict.run(Some(&lp.objective), limit, &mut iterations) {
        None => LpStatus::IterationLimit,
        Some(Step::Unbounded) => LpStatus::Unbounded,
        Some(_) => LpStatus::Optimal,
    };
    finish(&dict, status, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INF: f64 = f64::INFINITY;

    fn lp(obj: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, rows: Vec<LpRow>) -> LinearProgram {
        LinearProgram {
            objective: obj,
            lower,
            upper,
            rows,
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let p = lp(
            vec![-3.0, -5.0],
            vec![0.0, 0.0],
            vec![INF, INF],
            vec![
                LpRow::le(vec![(0, 1.0)], 4.0),
                LpRow::le(vec![(1, 2.0)], 12.0),
                LpRow::le(vec![(0, 3.0), (1, 2.0)], 18.0),
            ],
        );
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // min x + y  s.t. x + y >= 2, x - y = 0.5 (as two rows), 0 <= x, y <= 10
        let p = lp(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![10.0, 10.0],
            vec![
                LpRow::ge(vec![(0, 1.0), (1, 1.0)], 2.0),
                LpRow {
                    coeffs: vec![(0, 1.0), (1, -1.0)],
                    lower: 0.5,
                    upper: 0.5,
                },
            ],
        );
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-9);
        assert!((s.x[0] - 1.25).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = lp(
            vec![0.0],
            vec![0.0],
            vec![1.0],
            vec![LpRow::ge(vec![(0, 1.0)], 2.0)],
        );
        assert_eq!(solve(&p).status, LpStatus::Infeasible);
        let p = lp(vec![-1.0], vec![0.0], vec![INF], vec![LpRow::ge(vec![(0, 1.0)], 2.0)]);
        assert_eq!(solve(&p).status, LpStatus::Unbounded);
        let p = lp(vec![0.0], vec![2.0], vec![1.0], vec![]);
        assert_eq!(solve(&p).status, LpStatus::Infeasible);
    }

    #[test]
    fn free_variables() {
        // min |x - 3| style: min t  s.t. t >= x - 3, t >= 3 - x, x free, t free
        let p = lp(
            vec![0.0, 1.0],
            vec![-INF, -INF],
            vec![INF, INF],
            vec![
                LpRow::ge(vec![(1, 1.0), (0, -1.0)], -3.0),
                LpRow::ge(vec![(1, 1.0), (0, 1.0)], 3.0),
            ],
        );
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.objective.abs() < 1e-9);
        assert!((s.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn beale_cycling_example_terminates() {
        // Beale's classic example cycles under naive Dantzig pricing.
        // min -3/4 x4 + 20 x5 - 1/2 x6 + 6 x7
        let p = lp(
            vec![-0.75, 20.0, -0.5, 6.0],
            vec![0.0; 4],
            vec![INF; 4],
            vec![
                LpRow::le(vec![(0, 0.25), (1, -8.0), (2, -1.0), (3, 9.0)], 0.0),
                LpRow::le(vec![(0, 0.5), (1, -12.0), (2, -0.5), (3, 3.0)], 0.0),
                LpRow::le(vec![(2, 1.0)], 1.0),
            ],
        );
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.25).abs() < 1e-9);
    }

    /// Vertex enumeration oracle for tiny 2-variable box LPs.
    fn brute_2d(p: &LinearProgram) -> Option<f64> {
        let mut lines: Vec<(f64, f64, f64)> = Vec::new();
        for j in 0..2 {
            let mut a = [0.0, 0.0];
            a[j] = 1.0;
            lines.push((a[0], a[1], p.lower[j]));
            lines.push((a[0], a[1], p.upper[j]));
        }
        for r in &p.rows {
            let mut a = [0.0, 0.0];
            for &(j, v) in &r.coeffs {
                a[j] += v;
            }
            for b in [r.lower, r.upper] {
                if b.is_finite() {
                    lines.push((a[0], a[1], b));
                }
            }
        }
        let feasible = |x: f64, y: f64| {
            let ok_box = (0..2).all(|j| {
                let v = [x, y][j];
                v >= p.lower[j] - 1e-7 && v <= p.upper[j] + 1e-7
            });
            ok_box
                && p.rows.iter().all(|r| {
                    let v: f64 = r.coeffs.iter().map(|&(j, a)| a * [x, y][j]).sum();
                    v >= r.lower - 1e-7 && v <= r.upper + 1e-7
                })
        };
        let mut best: Option<f64> = None;
        for i in 0..lines.len() {
            for k in i + 1..lines.len() {
                let (a1, b1, c1) = lines[i];
                let (a2, b2, c2) = lines[k];
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (c1 * b2 - c2 * b1) / det;
                let y = (a1 * c2 - a2 * c1) / det;
                if feasible(x, y) {
                    let v = p.objective[0] * x + p.objective[1] * y;
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
        }
        best
    }

    #[test]
    fn random_2d_against_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let rows = (0..rng.random_range(1..6))
                .map(|_| {
                    let coeffs = vec![(0, rng.random_range(-3.0..3.0)), (1, rng.random_range(-3.0..3.0))];
                    if rng.random::<bool>() {
                        LpRow::le(coeffs, rng.random_range(-2.0..5.0))
                    } else {
                        LpRow::ge(coeffs, rng.random_range(-5.0..2.0))
                    }
                })
                .collect();
            let p = lp(
                vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                vec![rng.random_range(-4.0..0.0), rng.random_range(-4.0..0.0)],
                vec![rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)],
                rows,
            );
            let s = solve(&p);
            match brute_2d(&p) {
                None => assert_eq!(s.status, LpStatus::Infeasible, "{p:?}"),
                Some(v) => {
                    assert_eq!(s.status, LpStatus::Optimal, "{p:?}");
                    assert!((s.objective - v).abs() < 1e-6, "{} vs {v}", s.objective);
                }
            }
        }
    }
}
