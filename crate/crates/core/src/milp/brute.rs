//! Exhaustive reference solver for small instances.
//!
//! Realizability of an indicator vector is decided by Fourier-Motzkin
//! elimination, so the oracle shares no code with the simplex.

use super::{
    manual_count, wrong_budget, wrong_count, MilpConfig, MilpError, MilpSolution, MilpStatus,
    OptimizationInstance,
};

pub const BRUTE_FORCE_MAX_ROWS: usize = 20;

const FM_TOL: f64 = 1e-9;

/// `a . w <= c`
#[derive(Debug, Clone)]
struct Half {
    a: Vec<f64>,
    c: f64,
}

/// Finds `w` satisfying every half-space, or `None` when the system is
/// empty. Variables are eliminated from last to first and recovered by
/// back substitution.
fn fourier_motzkin(n: usize, system: Vec<Half>) -> Option<Vec<f64>> {
    let mut stages: Vec<Vec<Half>> = Vec::with_capacity(n);
    let mut current = system;
    for k in (0..n).rev() {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for h in current {
            let ak = h.a[k];
            if ak > 0.0 {
                pos.push(h);
            } else if ak < 0.0 {
                neg.push(h);
            } else {
                rest.push(h);
            }
        }
        for p in &pos {
            for q in &neg {
                let (sp, sq) = (1.0 / p.a[k], -1.0 / q.a[k]);
                let mut a: Vec<f64> = p.a.iter().zip(&q.a).map(|(x, y)| x * sp + y * sq).collect();
                a[k] = 0.0;
                rest.push(Half {
                    a,
                    c: p.c * sp + q.c * sq,
                });
            }
        }
        let mut stage = pos;
        stage.extend(neg);
        stages.push(stage);
        current = prune(rest);
        if current.iter().any(|h| h.a.iter().all(|&x| x == 0.0) && h.c < -FM_TOL) {
            return None;
        }
    }
    if current.iter().any(|h| h.c < -FM_TOL) {
        return None;
    }

    // stages[s] holds the constraints that bound variable n-1-s given the
    // earlier variables.
    let mut w = vec![0.0; n];
    for k in 0..n {
        let stage = &stages[n - 1 - k];
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for h in stage {
            let rest: f64 = (0..k).map(|j| h.a[j] * w[j]).sum();
            let bound = (h.c - rest) / h.a[k];
            if h.a[k] > 0.0 {
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
        }
        w[k] = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        };
    }
    Some(w)
}

/// Drops exact duplicates after scaling each row to unit max-norm.
fn prune(rows: Vec<Half>) -> Vec<Half> {
    let mut out: Vec<Half> = Vec::with_capacity(rows.len());
    for mut h in rows {
        let scale = h.a.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        if scale > 0.0 {
            h.a.iter_mut().for_each(|x| *x /= scale);
            h.c /= scale;
        }
        if let Some(o) = out.iter_mut().find(|o| o.a == h.a) {
            o.c = o.c.min(h.c);
        } else {
            out.push(h);
        }
    }
    out
}

fn realize(instance: &OptimizationInstance, cfg: &MilpConfig, x: &[bool]) -> Option<Vec<f64>> {
    let n = instance.n();
    let mut system = Vec::with_capacity(instance.m() + 2 * n);
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        system.push(Half {
            a: a.clone(),
            c: cfg.upper(n),
        });
        a[j] = -1.0;
        system.push(Half {
            a,
            c: -cfg.omega_lower,
        });
    }
    for (r, &xi) in instance.rows().iter().zip(x) {
        if xi {
            system.push(Half {
                a: r.theta.iter().map(|t| -t).collect(),
                c: -(1.0 + cfg.epsilon),
            });
        } else {
            system.push(Half {
                a: r.theta.clone(),
                c: 1.0,
            });
        }
    }
    fourier_motzkin(n, system)
}

/// Enumerates indicator vectors by increasing manual count and returns the
/// first one that meets the accuracy row and is realizable by some weights.
pub fn brute_force(instance: &OptimizationInstance, cfg: &MilpConfig) -> Result<MilpSolution, MilpError> {
    let m = instance.m();
    if m > BRUTE_FORCE_MAX_ROWS {
        return Err(MilpError::Unsupported(format!(
            "brute force is limited to {BRUTE_FORCE_MAX_ROWS} rows, instance has {m}"
        )));
    }
    cfg.validate(instance)?;
    let budget = wrong_budget(m, cfg.alpha);
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); m + 1];
    let mut x = vec![false; m];
    for mask in 0..(1u32 << m) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = mask >> i & 1 == 1;
        }
        if wrong_count(instance, &x) <= budget {
            buckets[manual_count(instance, &x)].push(mask);
        }
    }
    for (count, masks) in buckets.iter().enumerate() {
        for &mask in masks {
            let x: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
            if let Some(omega) = realize(instance, cfg, &x) {
                return Ok(MilpSolution {
                    omega,
                    x,
                    manual_count: count,
                    lower_bound: count as f64,
                    gap: 0.0,
                    status: MilpStatus::Optimal,
                    nodes: 0,
                });
            }
        }
    }
    unreachable!("the all-zero indicator vector is always realizable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::tests::{inst, random_instance};
    use crate::milp::{formulate, verify};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_row() {
        let i = inst(1, &[(&[0.5], 1, 1)]);
        let s = brute_force(&i, &MilpConfig::new(1.0)).unwrap();
        assert_eq!(s.manual_count, 0);
        assert!(s.omega[0] * 0.5 > 1.0);
    }

    #[test]
    fn identical_points_share_indicator() {
        let i = inst(2, &[(&[0.4, 0.6], 1, 1), (&[0.4, 0.6], 1, 0)]);
        assert_eq!(brute_force(&i, &MilpConfig::new(1.0)).unwrap().manual_count, 2);
    }

    #[test]
    fn three_row_example() {
        let i = inst(1, &[(&[0.9], 1, 1), (&[0.8], 1, 0), (&[0.7], 1, 1)]);
        assert_eq!(brute_force(&i, &MilpConfig::new(1.0)).unwrap().manual_count, 2);
        assert_eq!(brute_force(&i, &MilpConfig::new(0.5)).unwrap().manual_count, 0);
    }

    #[test]
    fn two_dimensional_separation() {
        // w = (0.95, 0.95) admits both correct rows and rejects the wrong one.
        let i = inst(
            2,
            &[(&[0.9, 0.2], 1, 1), (&[0.2, 0.9], 1, 1), (&[0.5, 0.5], 1, 0)],
        );
        assert_eq!(brute_force(&i, &MilpConfig::new(1.0)).unwrap().manual_count, 1);
        let i = inst(
            2,
            &[(&[0.9, 0.2], 1, 1), (&[0.2, 0.9], 1, 1), (&[0.6, 0.6], 1, 0)],
        );
        // x = (1, 1, 0) would need 0.9a + 0.2b > 1, 0.2a + 0.9b > 1 and
        // 0.6(a + b) <= 1, impossible since the first two sum to 1.1(a+b) > 2.
        assert_eq!(brute_force(&i, &MilpConfig::new(1.0)).unwrap().manual_count, 2);
    }

    #[test]
    fn refuses_large_instances() {
        let rows: Vec<(&[f64], u8, u8)> = vec![(&[0.5], 1, 1); 21];
        let i = inst(1, &rows);
        assert!(matches!(brute_force(&i, &MilpConfig::new(1.0)), Err(MilpError::Unsupported(_))));
    }

    #[test]
    fn solutions_verify_and_satisfy_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..40 {
            let i = random_instance(&mut rng, 1 + k % 3, 1 + k % 10);
            let cfg = MilpConfig::new(0.8);
            let s = brute_force(&i, &cfg).unwrap();
            assert!(verify(&s, &i, &cfg).passed(), "{k}");
            let model = formulate(&i, &cfg).unwrap();
            assert!(model.program.is_feasible(&s.values(), 1e-7), "{k}");
        }
    }

    #[test]
    fn elimination_finds_points() {
        // 1 <= w0 + w1 <= 2, w0 - w1 >= 0.5, w1 >= 0
        let h = |a: Vec<f64>, c| Half { a, c };
        let sys = vec![
            h(vec![1.0, 1.0], 2.0),
            h(vec![-1.0, -1.0], -1.0),
            h(vec![-1.0, 1.0], -0.5),
            h(vec![0.0, -1.0], 0.0),
        ];
        let w = fourier_motzkin(2, sys).unwrap();
        assert!(w[0] + w[1] <= 2.0 + 1e-12 && w[0] + w[1] >= 1.0 - 1e-12);
        assert!(w[0] - w[1] >= 0.5 - 1e-12 && w[1] >= -1e-12);
        let sys = vec![h(vec![1.0, 0.0], 1.0), h(vec![-1.0, 0.0], -2.0)];
        assert!(fourier_motzkin(2, sys).is_none());
    }
}
