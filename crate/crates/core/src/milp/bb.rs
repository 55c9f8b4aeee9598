//! Depth-first branch and bound over the indicator variables.
//!
//! Every node fixes some indicators. Fixing `x_i = 1` imposes
//! `theta_i . omega >= 1 + eps`, fixing `x_i = 0` imposes
//! `theta_i . omega <= 1`; together with the weight box these describe the
//! node's weight polytope `P`. A node is processed in three steps:
//!
//! 1. Propagation. Once the wrong-label budget is used up, every free wrong
//!    row is fixed to 0. A free row whose score cannot reach `1 + eps` on
//!    `P` is fixed to 0, one whose score cannot drop to 1 is fixed to 1.
//!    Both questions are answered by a pool of known points of `P` when
//!    possible and by the simplex otherwise.
//! 2. Bounding. The node bound counts fixed-manual rows and assumes every
//!    free correct row plus as many free wrong rows as the budget allows
//!    become automatic. This equals the rounded-up big-M relaxation bound
//!    whenever the relaxation value is not dominated by the `1/M` terms.
//! 3. Branching on the free row whose score at the node's best ray point is
//!    closest to 1, lowest index first. The child agreeing with that point
//!    is explored first.
//!
//! Incumbents come from threshold sweeps along rays `t * d`, which are
//! exact along each ray and never land inside the `(1, 1 + eps)` band.

use std::time::{Duration, Instant};

use super::one_d::sweep;
use super::{
    dot, indicators, manual_count, wrong_budget, wrong_count, MilpModel, MilpSolution, MilpStatus,
    OptimizationInstance, TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lp::{self, LinearProgram, LpRow, LpStatus};

const FREE: i8 = -1;
const POOL_MAX: usize = 16;
const ROOT_DIRECTIONS: usize = 200;
const LINE_RANDOM: usize = 16;

struct Node {
    fix: Vec<i8>,
    bound: usize,
    pool: Vec<Vec<f64>>,
}

enum LpOutcome {
    Point(Vec<f64>),
    Infeasible,
    Unknown,
}

struct Search<'a> {
    inst: &'a OptimizationInstance,
    eps: f64,
    lo: f64,
    hi: f64,
    budget: usize,
    agreed: Vec<usize>,
    best_omega: Vec<f64>,
    best_x: Vec<bool>,
    best_manual: usize,
    improved: bool,
    /// Smallest bound among nodes dropped without a complete search.
    abandoned: Option<usize>,
}

pub fn solve_bb(model: &MilpModel) -> MilpSolution {
    let inst = &model.instance;
    let cfg = &model.config;
    let (n, m) = (inst.n(), inst.m());
    let start = Instant::now();
    let deadline = cfg.time_limit_seconds.map(|s| start + Duration::from_secs(s));

    let mut s = Search {
        inst,
        eps: cfg.epsilon,
        lo: cfg.omega_lower,
        hi: cfg.upper(n),
        budget: wrong_budget(m, cfg.alpha),
        agreed: (0..m).filter(|&i| inst.rows()[i].z).collect(),
        best_omega: vec![0.0; n],
        best_x: vec![false; m],
        best_manual: m,
        improved: false,
        abandoned: None,
    };
    for d in simplex_grid(n) {
        if let Some((w, _)) = s.ray_sweep(&d, None) {
            s.offer(&w);
        }
    }
    let lines = line_directions(n);
    s.polish(&lines);

    let root_fix = vec![FREE; m];
    let mut stack = vec![Node {
        bound: s.bound(&root_fix),
        fix: root_fix,
        pool: vec![vec![0.0; n]],
    }];
    let mut nodes = 0u64;
    let mut stopped = false;
    while let Some(node) = stack.pop() {
        if node.bound >= s.best_manual {
            continue;
        }
        let out_of_nodes = cfg.node_limit.is_some_and(|l| nodes >= l);
        let out_of_time = deadline.is_some_and(|d| Instant::now() >= d);
        if out_of_nodes || out_of_time {
            stack.push(node);
            stopped = true;
            break;
        }
        nodes += 1;
        let before = s.best_manual;
        s.process(node, &mut stack);
        if s.best_manual < before {
            s.polish(&lines);
        }
    }

    let mut lower = s.best_manual;
    if stopped {
        lower = stack.iter().map(|nd| nd.bound).fold(lower, usize::min);
    }
    if let Some(a) = s.abandoned {
        lower = lower.min(a);
    }
    let gap = (s.best_manual - lower) as f64;
    let status = if gap == 0.0 {
        MilpStatus::Optimal
    } else if s.improved {
        MilpStatus::Incumbent
    } else {
        MilpStatus::TrivialFallback
    };
    MilpSolution {
        omega: s.best_omega,
        x: s.best_x,
        manual_count: s.best_manual,
        lower_bound: lower as f64,
        gap,
        status,
        nodes,
    }
}

/// Axes, pairwise exchanges and a fixed set of pseudo-random directions.
fn line_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for j in 0..n {
        let mut d = vec![0.0; n];
        d[j] = 1.0;
        out.push(d.clone());
        for k in j + 1..n {
            d[k] = -1.0;
            out.push(d.clone());
            d[k] = 0.0;
        }
    }
    out.push(vec![1.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..LINE_RANDOM {
        out.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    out
}

/// Nonnegative directions `k / r` with `sum k = r`, for the largest `r`
/// keeping the count within [`ROOT_DIRECTIONS`].
fn simplex_grid(n: usize) -> Vec<Vec<f64>> {
    fn count(r: usize, n: usize) -> usize {
        // C(r + n - 1, n - 1), saturating.
        let mut c: usize = 1;
        for k in 1..n {
            c = c.saturating_mul(r + k) / k;
        }
        c
    }
    if n == 1 {
        return vec![vec![1.0]];
    }
    let mut r = 1;
    while r < 64 && count(r + 1, n) <= ROOT_DIRECTIONS {
        r += 1;
    }
    let mut out = Vec::new();
    let mut parts = vec![0usize; n];
    fn rec(j: usize, left: usize, r: usize, parts: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if j + 1 == parts.len() {
            parts[j] = left;
            out.push(parts.iter().map(|&k| k as f64 / r as f64).collect());
            return;
        }
        for k in (0..=left).rev() {
            parts[j] = k;
            rec(j + 1, left - k, r, parts, out);
        }
    }
    rec(0, r, r, &mut parts, &mut out);
    out
}

impl Search<'_> {
    fn theta(&self, i: usize) -> &[f64] {
        &self.inst.rows()[i].theta
    }

    fn is_wrong(&self, i: usize) -> bool {
        let r = &self.inst.rows()[i];
        r.z && !r.b
    }

    /// Records `omega` if it is a valid solution better than the incumbent.
    fn offer(&mut self, omega: &[f64]) -> bool {
        let omega: Vec<f64> = omega.iter().map(|w| w.clamp(self.lo, self.hi)).collect();
        let Some(x) = indicators(self.inst, self.eps, &omega) else {
            return false;
        };
        if wrong_count(self.inst, &x) > self.budget {
            return false;
        }
        let mc = manual_count(self.inst, &x);
        if mc >= self.best_manual {
            return false;
        }
        self.best_manual = mc;
        self.best_omega = omega;
        self.best_x = x;
        self.improved = true;
        true
    }

    /// Line searches through the incumbent until none improves it.
    fn polish(&mut self, directions: &[Vec<f64>]) {
        loop {
            let mut better = false;
            for d in directions {
                if let Some(w) = self.line_search(&self.best_omega, d) {
                    better |= self.offer(&w);
                }
            }
            if !better {
                return;
            }
        }
    }

    /// Best point of `w0 + t d` inside the box. Along the line every row is
    /// automatic, manual or banded on intervals of `t`, so scanning the
    /// elementary intervals between breakpoints is exact.
    fn line_search(&self, w0: &[f64], d: &[f64]) -> Option<Vec<f64>> {
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (&w, &dj) in w0.iter().zip(d) {
            if dj != 0.0 {
                let (a, b) = ((self.lo - w) / dj, (self.hi - w) / dj);
                t_lo = t_lo.max(a.min(b));
                t_hi = t_hi.min(a.max(b));
            }
        }
        if !t_lo.is_finite() || !t_hi.is_finite() || t_lo >= t_hi {
            return None;
        }
        let rows = self.inst.rows();
        let high = 1.0 + self.eps;
        // State 2 = automatic, 1 = banded, 0 = manual.
        let state = |a: f64| -> u8 {
            if a >= high {
                2
            } else if a > 1.0 {
                1
            } else {
                0
            }
        };
        let mut events: Vec<(f64, usize, u8)> = Vec::new();
        let mid0 = {
            let mut cuts: Vec<f64> = Vec::new();
            for r in rows {
                let (a, c) = (dot(&r.theta, w0), dot(&r.theta, d));
                if c != 0.0 {
                    for level in [1.0, high] {
                        let t = (level - a) / c;
                        if t > t_lo && t < t_hi {
                            cuts.push(t);
                        }
                    }
                }
            }
            let first = cuts.iter().copied().fold(t_hi, f64::min);
            0.5 * (t_lo + first)
        };
        let mut current: Vec<u8> = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let (a, c) = (dot(&r.theta, w0), dot(&r.theta, d));
            current.push(state(a + mid0 * c));
            if c > 0.0 {
                events.push(((1.0 - a) / c, i, 1));
                events.push(((high - a) / c, i, 2));
            } else if c < 0.0 {
                events.push(((high - a) / c, i, 1));
                events.push(((1.0 - a) / c, i, 0));
            }
        }
        events.retain(|e| e.0 > mid0 && e.0 < t_hi);
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let (mut banded, mut agreed, mut wrong) = (0usize, 0usize, 0usize);
        let tally = |i: usize, st: u8, sign: isize, b: &mut usize, ag: &mut usize, wr: &mut usize| {
            let add = |v: &mut usize| *v = (*v as isize + sign) as usize;
            match st {
                1 => add(b),
                2 if rows[i].z => {
                    add(ag);
                    if !rows[i].b {
                        add(wr);
                    }
                }
                _ => {}
            }
        };
        for (i, &st) in current.iter().enumerate() {
            tally(i, st, 1, &mut banded, &mut agreed, &mut wrong);
        }
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |t: f64, banded: usize, agreed: usize, wrong: usize| {
            if banded == 0 && wrong <= self.budget && best.is_none_or(|(b, _)| agreed > b) {
                best = Some((agreed, t));
            }
        };
        consider(mid0, banded, agreed, wrong);
        let mut k = 0;
        while k < events.len() {
            let t = events[k].0;
            while k < events.len() && events[k].0 == t {
                let (_, i, st) = events[k];
                tally(i, current[i], -1, &mut banded, &mut agreed, &mut wrong);
                current[i] = st;
                tally(i, st, 1, &mut banded, &mut agreed, &mut wrong);
                k += 1;
            }
            let next = events.get(k).map_or(t_hi, |e| e.0);
            consider(0.5 * (t + next), banded, agreed, wrong);
        }
        let (_, t) = best?;
        Some(w0.iter().zip(d).map(|(w, dj)| w + t * dj).collect())
    }

    /// Best point on the ray `t * d`, `t >= 0`, inside the box and, when
    /// `fix` is given, consistent with the fixed rows.
    fn ray_sweep(&self, d: &[f64], fix: Option<&[i8]>) -> Option<(Vec<f64>, usize)> {
        let scores: Vec<f64> = self.inst.rows().iter().map(|r| dot(&r.theta, d)).collect();
        let (mut t_min, mut t_max) = (0.0f64, f64::INFINITY);
        for &dj in d {
            if dj > 0.0 {
                t_max = t_max.min(self.hi / dj);
            } else if dj < 0.0 {
                t_max = t_max.min(self.lo / dj);
            }
        }
        if let Some(fix) = fix {
            for (i, &f) in fix.iter().enumerate() {
                let s = scores[i];
                match f {
                    1 if s <= 0.0 => return None,
                    1 => t_min = t_min.max((1.0 + self.eps) / s),
                    0 if s > 0.0 => t_max = t_max.min(1.0 / s),
                    _ => {}
                }
            }
        }
        if t_min > t_max {
            return None;
        }
        let p = sweep(self.inst, &scores, self.budget, self.eps, t_min, t_max)?;
        Some((d.iter().map(|dj| p.t * dj).collect(), p.manual_count))
    }

    fn bound(&self, fix: &[i8]) -> usize {
        let (mut auto, mut auto_wrong, mut free_correct, mut free_wrong) = (0, 0, 0, 0);
        for &i in &self.agreed {
            let wrong = self.is_wrong(i);
            match fix[i] {
                1 => {
                    auto += 1;
                    auto_wrong += usize::from(wrong);
                }
                FREE if wrong => free_wrong += 1,
                FREE => free_correct += 1,
                _ => {}
            }
        }
        let extra = self.budget.saturating_sub(auto_wrong).min(free_wrong);
        self.inst.m() - auto - free_correct - extra
    }

    /// Fixed rows that define `P`. With nonnegative weights a row fixed to 0
    /// is implied by any other such row with componentwise larger `theta`,
    /// and a row fixed to 1 by one with componentwise smaller `theta`, so
    /// only the extreme rows are kept.
    fn active_rows(&self, fix: &[i8]) -> Vec<(usize, i8)> {
        let sum = |i: usize| self.theta(i).iter().sum::<f64>();
        let mut out = Vec::new();
        for value in [0i8, 1] {
            let mut rows: Vec<(f64, usize)> = (0..fix.len())
                .filter(|&i| fix[i] == value)
                .map(|i| (sum(i), i))
                .collect();
            if self.lo < 0.0 {
                out.extend(rows.iter().map(|&(_, i)| (i, value)));
                continue;
            }
            // Potential dominators come first.
            if value == 0 {
                rows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            } else {
                rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
            let start = out.len();
            for (_, i) in rows {
                let ti = self.theta(i);
                let implied = out[start..].iter().any(|&(k, _)| {
                    let tk = self.theta(k);
                    if value == 0 {
                        tk.iter().zip(ti).all(|(a, b)| a >= b)
                    } else {
                        tk.iter().zip(ti).all(|(a, b)| a <= b)
                    }
                });
                if !implied {
                    out.push((i, value));
                }
            }
        }
        out
    }

    fn solve_lp(&self, active: &[(usize, i8)], objective: Vec<f64>) -> LpOutcome {
        let n = self.inst.n();
        let mut prog = LinearProgram::new(vec![self.lo; n], vec![self.hi; n]);
        prog.objective = objective;
        for &(i, f) in active {
            let coeffs: Vec<(usize, f64)> = self.theta(i).iter().copied().enumerate().collect();
            if f == 1 {
                prog.rows.push(LpRow::ge(coeffs, 1.0 + self.eps));
            } else {
                prog.rows.push(LpRow::le(coeffs, 1.0));
            }
        }
        let sol = lp::solve(&prog);
        match sol.status {
            LpStatus::Optimal => LpOutcome::Point(sol.x),
            LpStatus::Infeasible => LpOutcome::Infeasible,
            LpStatus::Unbounded | LpStatus::IterationLimit => LpOutcome::Unknown,
        }
    }

    /// Fixes implied indicators. Returns false when the node is infeasible.
    fn propagate(&self, fix: &mut [i8], pool: &mut Vec<Vec<f64>>) -> bool {
        let n = self.inst.n();
        let high = 1.0 + self.eps - TOL;
        let low = 1.0 + TOL;
        loop {
            let used = self.agreed.iter().filter(|&&i| fix[i] == 1 && self.is_wrong(i)).count();
            if used > self.budget {
                return false;
            }
            if used == self.budget {
                for &i in &self.agreed {
                    if fix[i] == FREE && self.is_wrong(i) {
                        fix[i] = 0;
                        pool.retain(|p| dot(self.theta(i), p) <= low);
                    }
                }
            }
            let mut active = self.active_rows(fix);
            if pool.is_empty() {
                let mut objective = vec![0.0; n];
                for &i in &self.agreed {
                    if fix[i] == FREE && !self.is_wrong(i) {
                        for (o, t) in objective.iter_mut().zip(self.theta(i)) {
                            *o -= t;
                        }
                    }
                }
                match self.solve_lp(&active, objective) {
                    LpOutcome::Point(p) => pool.push(p),
                    LpOutcome::Infeasible => return false,
                    LpOutcome::Unknown => return true,
                }
            }

            let mut changed = false;
            for &i in &self.agreed {
                if fix[i] != FREE {
                    continue;
                }
                let theta = self.theta(i);
                if !pool.iter().any(|p| dot(theta, p) >= high) {
                    match self.solve_lp(&active, theta.iter().map(|t| -t).collect()) {
                        LpOutcome::Infeasible => return false,
                        LpOutcome::Unknown => {}
                        LpOutcome::Point(p) if dot(theta, &p) >= high => push(pool, p),
                        LpOutcome::Point(_) => {
                            fix[i] = 0;
                            active.push((i, 0));
                            pool.retain(|p| dot(theta, p) <= low);
                            changed = true;
                            continue;
                        }
                    }
                }
                if !pool.iter().any(|p| dot(theta, p) <= low) {
                    match self.solve_lp(&active, theta.to_vec()) {
                        LpOutcome::Infeasible => return false,
                        LpOutcome::Unknown => {}
                        LpOutcome::Point(p) if dot(theta, &p) <= low => push(pool, p),
                        LpOutcome::Point(_) => {
                            fix[i] = 1;
                            active.push((i, 1));
                            pool.retain(|p| dot(theta, p) >= high);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn process(&mut self, mut node: Node, stack: &mut Vec<Node>) {
        if !self.propagate(&mut node.fix, &mut node.pool) {
            return;
        }
        let bound = self.bound(&node.fix);
        if bound >= self.best_manual {
            return;
        }

        let mut hat: Option<(usize, Vec<f64>)> = None;
        for p in &node.pool {
            self.offer(p);
            if let Some((w, mc)) = self.ray_sweep(p, Some(&node.fix)) {
                self.offer(&w);
                if hat.as_ref().is_none_or(|(best, _)| mc < *best) {
                    hat = Some((mc, w));
                }
            }
        }
        if bound >= self.best_manual {
            return;
        }
        let Some(hat) = hat.map(|h| h.1).or_else(|| node.pool.first().cloned()) else {
            self.abandon(bound);
            return;
        };

        let distance = |i: usize| (dot(self.theta(i), &hat) - 1.0).abs();
        let row = self
            .agreed
            .iter()
            .copied()
            .filter(|&i| node.fix[i] == FREE)
            .min_by(|&a, &b| distance(a).total_cmp(&distance(b)).then(a.cmp(&b)))
            .or_else(|| {
                // Every agreed row is fixed, yet no known point of P clears
                // the band for the remaining rows: split on a banded row.
                (0..self.inst.m()).find(|&i| {
                    let s = dot(self.theta(i), &hat);
                    node.fix[i] == FREE && s > 1.0 + TOL && s < 1.0 + self.eps - TOL
                })
            });
        let Some(row) = row else {
            self.abandon(bound);
            return;
        };

        let first: i8 = if dot(self.theta(row), &hat) > 1.0 { 1 } else { 0 };
        for value in [1 - first, first] {
            let mut fix = node.fix.clone();
            fix[row] = value;
            let theta = self.theta(row);
            let pool = node
                .pool
                .iter()
                .filter(|p| {
                    let s = dot(theta, p);
                    if value == 1 {
                        s >= 1.0 + self.eps - TOL
                    } else {
                        s <= 1.0 + TOL
                    }
                })
                .cloned()
                .collect();
            stack.push(Node { fix, bound, pool });
        }
    }

    fn abandon(&mut self, bound: usize) {
        self.abandoned = Some(self.abandoned.map_or(bound, |a| a.min(bound)));
    }
}

fn push(pool: &mut Vec<Vec<f64>>, p: Vec<f64>) {
    if pool.len() >= POOL_MAX {
        pool.remove(0);
    }
    pool.push(p);
}
