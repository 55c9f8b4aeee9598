//! Sorted-threshold sweep along one direction in weight space.

use super::{wrong_budget, MilpConfig, MilpError, MilpSolution, MilpStatus, OptimizationInstance};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SweepPoint {
    pub t: f64,
    pub x: Vec<bool>,
    pub manual_count: usize,
}

/// Scans every cut of the rows sorted by `scores` (descending) for
/// `t` in `[t_min, t_max]`, `t_min >= 0`. Rows with equal score always
/// share a side. Returns the realizable cut within the wrong-label budget
/// with fewest manual rows, smallest prefix on ties.
pub(crate) fn sweep(
    instance: &OptimizationInstance,
    scores: &[f64],
    budget: usize,
    epsilon: f64,
    t_min: f64,
    t_max: f64,
) -> Option<SweepPoint> {
    let m = instance.m();
    let mut order: Vec<usize> = (0..m).filter(|&i| scores[i] > 0.0).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let first = order.first().map_or(f64::INFINITY, |&i| 1.0 / scores[i]);
    let mut best = (t_min <= first.min(t_max)).then_some((m, 0usize, t_min));
    let (mut agreed, mut wrong) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let mut end = k;
        while end < order.len() && scores[order[end]] == s {
            let r = &instance.rows()[order[end]];
            agreed += usize::from(r.z);
            wrong += usize::from(r.z && !r.b);
            end += 1;
        }
        if wrong > budget {
            break;
        }
        let next = order.get(end).map_or(0.0, |&i| scores[i]);
        let lo = ((1.0 + epsilon) / s).max(t_min);
        let hi = if next > 0.0 { (1.0 / next).min(t_max) } else { t_max };
        if lo <= hi && best.is_none_or(|b| m - agreed < b.0) {
            let mid = 2.0 / (s + next);
            let t = if mid >= lo && mid <= hi {
                mid
            } else if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                lo
            };
            best = Some((m - agreed, end, t));
        }
        k = end;
    }

    let (manual_count, prefix, t) = best?;
    let mut x = vec![false; m];
    for &i in &order[..prefix] {
        x[i] = true;
    }
    Some(SweepPoint { t, x, manual_count })
}

/// Exact optimum for a single classifier.
pub fn solve_1d(instance: &OptimizationInstance, cfg: &MilpConfig) -> Result<MilpSolution, MilpError> {
    if instance.n() != 1 {
        return Err(MilpError::Unsupported(format!(
            "the sorted sweep needs exactly one classifier, instance has {}",
            instance.n()
        )));
    }
    cfg.validate(instance)?;
    let scores: Vec<f64> = instance.rows().iter().map(|r| r.theta[0]).collect();
    let budget = wrong_budget(instance.m(), cfg.alpha);
    let p = sweep(instance, &scores, budget, cfg.epsilon, 0.0, cfg.upper(1))
        .expect("the empty cut is realizable at t = 0");
    Ok(MilpSolution {
        omega: vec![p.t],
        x: p.x,
        manual_count: p.manual_count,
        lower_bound: p.manual_count as f64,
        gap: 0.0,
        status: MilpStatus::Optimal,
        nodes: 0,
    })
}
