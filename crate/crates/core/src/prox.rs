//! Proximal mappings of the input penalty and the Moreau-smoothed soft
//! constraint penalty.
//!
//! Every kind evaluates in closed form. For indicator kinds the proximal
//! mapping is the Euclidean projection, and the penalty value reported at a
//! prox output is zero.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::linalg;

/// Per-stage nonsmooth input penalty `g_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxSpec {
    /// `g ≡ 0`.
    Zero,
    /// Indicator of `{lo ≤ v ≤ hi}`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Indicator of `{‖v‖∞ ≤ radius}`.
    InfBall { radius: f64 },
    /// Indicator of `{‖v‖₂ ≤ radius}`.
    EuclideanBall { radius: f64 },
    /// `weight · ‖v‖₁`.
    L1 { weight: f64 },
    /// Indicator of a finite point set (nonconvex).
    FiniteSet { points: Vec<Vec<f64>> },
}

impl ProxSpec {
    /// Dimension fixed by the parameters, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ProxSpec::Box { lo, .. } => Some(lo.len()),
            ProxSpec::FiniteSet { points } => points.first().map(Vec::len),
            _ => None,
        }
    }

    pub fn is_indicator(&self) -> bool {
        !matches!(self, ProxSpec::Zero | ProxSpec::L1 { .. })
    }

    /// Parameter violations, empty when the spec is well formed for blocks of
    /// size `dim`.
    pub fn check(&self, dim: usize) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            ProxSpec::Zero => {}
            ProxSpec::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    out.push(format!(
                        "box bounds have dimension ({}, {}), expected {dim}",
                        lo.len(),
                        hi.len()
                    ));
                }
                if lo
                    .iter()
                    .zip(hi)
                    .any(|(l, h)| l > h || l.is_nan() || h.is_nan())
                {
                    out.push("box requires lo <= hi componentwise".into());
                }
            }
            ProxSpec::InfBall { radius } | ProxSpec::EuclideanBall { radius } => {
                if !(*radius > 0.0) {
                    out.push(format!("ball radius must be positive, got {radius}"));
                }
            }
            ProxSpec::L1 { weight } => {
                if !(*weight >= 0.0) {
                    out.push(format!("l1 weight must be nonnegative, got {weight}"));
                }
            }
            ProxSpec::FiniteSet { points } => {
                if points.is_empty() {
                    out.push("finite set must be nonempty".into());
                }
                if points.iter().any(|p| p.len() != dim) {
                    out.push(format!("finite set points must have dimension {dim}"));
                }
            }
        }
        out
    }

    fn check_input(&self, len: usize) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim("prox input", d, len),
            None => Ok(()),
        }
    }

    /// Value of the penalty at `v`; `+∞` outside the domain of an indicator.
    pub fn value(&self, v: &[f64]) -> f64 {
        let inside = match self {
            ProxSpec::Zero => return 0.0,
            ProxSpec::L1 { weight } => return weight * v.iter().map(|x| x.abs()).sum::<f64>(),
            ProxSpec::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| l <= x && x <= h),
            ProxSpec::InfBall { radius } => linalg::norm_inf(v) <= *radius,
            // the scaled projection can land a few ulps outside the sphere
            ProxSpec::EuclideanBall { radius } => linalg::norm(v) <= radius * (1.0 + 1e-12),
            ProxSpec::FiniteSet { points } => points.iter().any(|p| p.as_slice() == v),
        };
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Writes `prox_{γg}(v)` into `out` and returns `g(out)`.
    ///
    /// Ties in the finite-set case go to the lowest index.
    pub fn prox_into(&self, v: &[f64], gamma: f64, out: &mut [f64]) -> f64 {
        debug_assert!(gamma > 0.0);
        debug_assert_eq!(v.len(), out.len());
        match self {
            ProxSpec::Zero => {
                out.copy_from_slice(v);
                0.0
            }
            ProxSpec::Box { lo, hi } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = v[i].max(lo[i]).min(hi[i]);
                }
                0.0
            }
            ProxSpec::InfBall { radius } => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x.clamp(-radius, *radius);
                }
                0.0
            }
            ProxSpec::EuclideanBall { radius } => {
                let n = linalg::norm(v);
                let s = if n > *radius { radius / n } else { 1.0 };
                for (o, x) in out.iter_mut().zip(v) {
                    *o = s * x;
                }
                0.0
            }
            ProxSpec::L1 { weight } => {
                let t = gamma * weight;
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x.signum() * (x.abs() - t).max(0.0);
                }
                weight * out.iter().map(|x| x.abs()).sum::<f64>()
            }
            ProxSpec::FiniteSet { points } => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, p) in points.iter().enumerate() {
                    let d = linalg::dist_sq(p, v);
                    if d < best_d {
                        best = i;
                        best_d = d;
                    }
                }
                out.copy_from_slice(&points[best]);
                0.0
            }
        }
    }
}

/// `prox_{γg}(v)`.
pub fn prox_apply(g: &ProxSpec, v: &[f64], gamma: f64) -> Result<Vec<f64>> {
    g.check_input(v.len())?;
    let mut out = vec![0.0; v.len()];
    g.prox_into(v, gamma, &mut out);
    Ok(out)
}

/// Moreau envelope `g^γ(v) = g(p) + ‖p − v‖²/(2γ)` with `p = prox_{γg}(v)`.
pub fn moreau_value(g: &ProxSpec, v: &[f64], gamma: f64) -> Result<f64> {
    g.check_input(v.len())?;
    let mut p = vec![0.0; v.len()];
    let gp = g.prox_into(v, gamma, &mut p);
    Ok(gp + linalg::dist_sq(&p, v) / (2.0 * gamma))
}

/// Soft penalty for `z ≥ b` smoothed with per-component weights `μ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SoftPenaltyResult {
    /// Projection of `z` onto `{z ≥ b}`.
    pub s: Vec<f64>,
    /// Gradient of the smoothed penalty, `μ ⊙ (z − s)`.
    pub q: Vec<f64>,
    /// `Σ (μ_i/2) min(0, z_i − b_i)²`.
    pub value: f64,
}

pub fn soft_penalty(z: &[f64], lower_bounds: &[f64], mu: &[f64]) -> Result<SoftPenaltyResult> {
    check_dim("soft penalty bounds", z.len(), lower_bounds.len())?;
    check_dim("soft penalty weights", z.len(), mu.len())?;
    let mut res = SoftPenaltyResult {
        s: Vec::with_capacity(z.len()),
        q: Vec::with_capacity(z.len()),
        value: 0.0,
    };
    for ((&zi, &bi), &mi) in z.iter().zip(lower_bounds).zip(mu) {
        let s = zi.max(bi);
        let viol = zi - s;
        res.s.push(s);
        res.q.push(mi * viol);
        res.value += 0.5 * mi * viol * viol;
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(n: usize) -> ProxSpec {
        ProxSpec::Box {
            lo: vec![-1.0; n],
            hi: vec![1.0; n],
        }
    }

    #[test]
    fn box_clamps() {
        let p = prox_apply(&bx(3), &[2.0, -0.5, 0.3], 0.7).unwrap();
        assert_eq!(p, vec![1.0, -0.5, 0.3]);
    }

    #[test]
    fn l1_soft_thresholds() {
        let p = prox_apply(&ProxSpec::L1 { weight: 1.0 }, &[2.0, -0.2], 0.5).unwrap();
        assert_eq!(p, vec![1.5, 0.0]);
    }

    #[test]
    fn finite_set_tie_goes_to_lowest_index() {
        let g = ProxSpec::FiniteSet {
            points: vec![vec![-1.0], vec![1.0]],
        };
        assert_eq!(prox_apply(&g, &[0.0], 1.0).unwrap(), vec![-1.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(prox_apply(&bx(3), &[0.0, 0.0], 1.0).is_err());
        assert!(moreau_value(&bx(2), &[0.0], 1.0).is_err());
    }

    #[test]
    fn moreau_values() {
        assert_eq!(moreau_value(&bx(1), &[3.0], 0.5).unwrap(), 4.0);
        assert_eq!(moreau_value(&bx(2), &[0.2, -0.9], 0.5).unwrap(), 0.0);
        assert_eq!(
            moreau_value(&ProxSpec::InfBall { radius: 2.0 }, &[1.5], 3.0).unwrap(),
            0.0
        );
        let v = moreau_value(&ProxSpec::L1 { weight: 1.0 }, &[2.0], 1.0).unwrap();
        assert_eq!(v, 1.5);
    }

    #[test]
    fn soft_penalty_examples() {
        let r = soft_penalty(&[-0.2], &[-0.1], &[100.0]).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!((r.q[0] + 10.0).abs() < 1e-12);
        assert_eq!(r.s, vec![-0.1]);

        let r = soft_penalty(&[0.5], &[-0.1], &[100.0]).unwrap();
        assert_eq!((r.value, r.q[0], r.s[0]), (0.0, 0.0, 0.5));

        let r = soft_penalty(&[-3.0, 1.0], &[-0.1, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.q, vec![0.0, 0.0]);
        assert!(soft_penalty(&[0.0], &[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn check_reports_bad_parameters() {
        assert!(!ProxSpec::Box {
            lo: vec![1.0],
            hi: vec![0.0]
        }
        .check(1)
        .is_empty());
        assert!(!ProxSpec::InfBall { radius: 0.0 }.check(3).is_empty());
        assert!(!ProxSpec::L1 { weight: -1.0 }.check(3).is_empty());
        assert!(!ProxSpec::FiniteSet { points: vec![] }.check(3).is_empty());
        assert!(bx(3).check(3).is_empty());
    }

    fn kinds(n: usize) -> Vec<ProxSpec> {
        vec![
            ProxSpec::Zero,
            ProxSpec::Box {
                lo: (0..n).map(|i| -1.0 + 0.1 * i as f64).collect(),
                hi: (0..n).map(|i| 0.5 + 0.2 * i as f64).collect(),
            },
            ProxSpec::InfBall { radius: 0.7 },
            ProxSpec::EuclideanBall { radius: 1.3 },
            ProxSpec::L1 { weight: 0.8 },
            ProxSpec::FiniteSet {
                points: vec![
                    vec![0.0; n],
                    vec![1.0; n],
                    vec![-1.0; n],
                    (0..n).map(|i| i as f64).collect(),
                ],
            },
        ]
    }

    fn objective(g: &ProxSpec, w: &[f64], v: &[f64], gamma: f64) -> f64 {
        g.value(w) + linalg::dist_sq(w, v) / (2.0 * gamma)
    }

    proptest! {
        #[test]
        fn prox_is_optimal_against_candidates(
            v in proptest::collection::vec(-3.0..3.0f64, 3),
            gamma in 0.05..5.0f64,
            cands in proptest::collection::vec(proptest::collection::vec(-3.0..3.0f64, 3), 100),
        ) {
            for g in kinds(3) {
                let p = prox_apply(&g, &v, gamma).unwrap();
                let best = objective(&g, &p, &v, gamma);
                prop_assert!(best.is_finite());
                for w in &cands {
                    // candidates outside an indicator's domain evaluate to +inf
                    let mut w = w.clone();
                    if g.is_indicator() && !matches!(g, ProxSpec::FiniteSet { .. }) {
                        let q = w.clone();
                        g.prox_into(&q, 1.0, &mut w);
                    }
                    prop_assert!(best <= objective(&g, &w, &v, gamma) + 1e-12);
                }
                if let ProxSpec::FiniteSet { points } = &g {
                    for w in points {
                        prop_assert!(best <= objective(&g, w, &v, gamma) + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn projections_are_nonexpansive(
            a in proptest::collection::vec(-4.0..4.0f64, 3),
            b in proptest::collection::vec(-4.0..4.0f64, 3),
        ) {
            for g in kinds(3).into_iter().filter(|g| !matches!(g, ProxSpec::FiniteSet { .. })) {
                let pa = prox_apply(&g, &a, 0.9).unwrap();
                let pb = prox_apply(&g, &b, 0.9).unwrap();
                prop_assert!(linalg::dist_sq(&pa, &pb) <= linalg::dist_sq(&a, &b) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn soft_gradient_matches_central_differences(
            z in proptest::collection::vec(-1.0..1.0f64, 4),
            mu in proptest::collection::vec(0.0..200.0f64, 4),
        ) {
            let b = vec![-0.1; 4];
            let r = soft_penalty(&z, &b, &mu).unwrap();
            for i in 0..4 {
                let h = 1e-6;
                let gap = z[i] - b[i];
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (soft_penalty(&zp, &b, &mu).unwrap().value
                    - soft_penalty(&zm, &b, &mu).unwrap().value) / (2.0 * h);
                if gap.abs() > 10.0 * h {
                    let scale = r.q[i].abs().max(1e-3);
                    prop_assert!((fd - r.q[i]).abs() / scale <= 1e-6);
                } else {
                    // at the kink: q lies in the subgradient interval [μ·min(gap,0), 0]
                    prop_assert!(r.q[i] <= 0.0 && r.q[i] >= mu[i] * gap.min(0.0) - 1e-12);
                }
                prop_assert_eq!(r.q[i], mu[i] * (z[i] - r.s[i]));
            }
            prop_assert!(r.value >= 0.0);
        }
    }
}
