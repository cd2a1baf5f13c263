//! Certificates for membership in the class of paths with uniformly elliptic increments.

use serde::Serialize;

use super::{sort_dedup, LipschitzPath, MatrixPath, Perturbed, RampStepPath};
use crate::linalg::SymMatrix;

const REFINEMENT: usize = 64;

/// Outcome of the search for `c > 0` with `q(v) − q(u) ⪰ c(v−u)Id` and
/// `Ellipt(q(v) − q(u)) ≤ 1/c` for all `u < v`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Certificate {
    Certified { c_low: f64 },
    Failed { u: f64, v: f64, detail: String },
}

impl Certificate {
    pub fn constant(&self) -> Option<f64> {
        match self {
            Certificate::Certified { c_low } => Some(*c_low),
            Certificate::Failed { .. } => None,
        }
    }
}

struct Probe {
    u: f64,
    value: SymMatrix,
}

fn probe_points(path: &dyn MatrixPath, segment_cuts: &[f64]) -> Vec<Probe> {
    let mut knots = path.knots();
    knots.retain(|&z| z > 0.0 && z < 1.0);
    let mut cuts = vec![0.0, 1.0];
    cuts.extend(segment_cuts.iter().copied().filter(|&z| z > 0.0 && z < 1.0));
    sort_dedup(&mut cuts);
    let mut us = knots.clone();
    for w in cuts.windows(2) {
        for i in 0..REFINEMENT {
            us.push(w[0] + (w[1] - w[0]) * i as f64 / REFINEMENT as f64);
        }
    }
    sort_dedup(&mut us);
    let mut pts = Vec::with_capacity(us.len() * 2 + 1);
    for &u in &us {
        if u > 0.0 && knots.iter().any(|&z| (z - u).abs() <= 1e-14) {
            pts.push(Probe {
                u,
                value: path.left_limit(u),
            });
        }
        pts.push(Probe { u, value: path.value(u) });
    }
    pts.push(Probe {
        u: 1.0,
        value: path.left_limit(1.0),
    });
    pts
}

fn certify_points(pts: &[Probe]) -> Certificate {
    let zero = &pts[0].value;
    if zero.norm() > 1e-12 {
        return Certificate::Failed {
            u: 0.0,
            v: 0.0,
            detail: format!("path does not start at 0 (|q(0)|_F = {:e})", zero.norm()),
        };
    }
    let mut c_low = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (a, b) = (&pts[i], &pts[j]);
            let inc = &b.value - &a.value;
            let width = b.u - a.u;
            if width == 0.0 && inc.norm() <= 1e-14 * (1.0 + a.value.norm()) {
                continue;
            }
            let vals = inc.eigenvalues();
            let lo = vals[0];
            let hi = vals[vals.len() - 1];
            if lo <= 0.0 {
                return Certificate::Failed {
                    u: a.u,
                    v: b.u,
                    detail: format!("increment has eigenvalue {lo:e} over a window of width {width:e}"),
                };
            }
            if width > 0.0 {
                c_low = c_low.min(lo / width);
            }
            c_low = c_low.min(lo / hi);
        }
    }
    Certificate::Certified { c_low }
}

/// Checks all pairs among knots, their left limits and a uniform
/// 64-point refinement of every segment.
pub fn uparrow_certificate(path: &RampStepPath) -> Certificate {
    let mut cuts = path.knots();
    cuts.push(0.0);
    cuts.push(1.0);
    certify_points(&probe_points(path, &cuts))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbCheck {
    pub member: bool,
    pub c_new: f64,
    pub certificate: Certificate,
}

/// Certificate for `q + εκ`; for `ε < c/(2L)` membership is guaranteed.
pub fn perturb_and_check(path: &RampStepPath, direction: &LipschitzPath, eps: f64) -> PerturbCheck {
    let p = Perturbed {
        base: path,
        direction,
        eps,
    };
    let mut cuts = path.knots();
    cuts.push(0.0);
    cuts.push(1.0);
    let certificate = certify_points(&probe_points(&p, &cuts));
    PerturbCheck {
        member: certificate.constant().is_some(),
        c_new: certificate.constant().unwrap_or(0.0),
        certificate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::StepPath;
    use crate::rng::{random_psd, random_sym, stream};
    use rand::Rng;

    fn ramp_with_step() -> RampStepPath {
        let step = StepPath::new(vec![0.5], vec![SymMatrix::zeros(2), SymMatrix::identity(2)]).unwrap();
        RampStepPath::new(0.5, step).unwrap()
    }

    #[test]
    fn pure_ramp_certifies_with_its_slope_capped_by_one() {
        let c = uparrow_certificate(&RampStepPath::ramp(2, 1.0).unwrap());
        assert!((c.constant().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_step_fails() {
        let s = StepPath::new(vec![0.5], vec![SymMatrix::zeros(1), SymMatrix::scalar(1.0)]).unwrap();
        assert!(matches!(uparrow_certificate(&s.into()), Certificate::Failed { .. }));
    }

    #[test]
    fn ramp_plus_identity_jump() {
        let p = ramp_with_step();
        let c = uparrow_certificate(&p).constant().unwrap();
        assert!(c >= 0.5 - 1e-12);
        let mut rng = stream(3, "pairs", 0);
        for _ in 0..100 {
            let (a, b): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let (u, v) = (a.min(b), a.max(b));
            if v - u < 1e-9 {
                continue;
            }
            let inc = &p.value(v) - &p.value(u);
            assert!(inc.min_eig() >= c * (v - u) * (1.0 - 1e-9));
            assert!(inc.max_eig() / inc.min_eig() <= 1.0 / c * (1.0 + 1e-9));
        }
    }

    #[test]
    fn rank_deficient_jump_fails() {
        let step = StepPath::new(vec![0.5], vec![SymMatrix::zeros(2), SymMatrix::diag(&[1.0, 0.0])]).unwrap();
        let p = RampStepPath::new(0.5, step).unwrap();
        assert!(uparrow_certificate(&p).constant().is_none());
    }

    #[test]
    fn perturbation_examples() {
        let p = RampStepPath::ramp(1, 1.0).unwrap();
        let kappa = LipschitzPath::from_fn(1, 16, |u| SymMatrix::scalar(-u)).unwrap();
        let z = perturb_and_check(&p, &kappa, 0.0);
        assert!(z.member && (z.c_new - 1.0).abs() < 1e-12);
        assert!(perturb_and_check(&p, &kappa, 0.25).member);
        assert!(!perturb_and_check(&p, &kappa, 100.0).member);
    }

    #[test]
    fn small_perturbations_stay_members() {
        let mut rng = stream(8, "perturb", 0);
        for _ in 0..50 {
            let d = rng.gen_range(1..=2);
            let c = rng.gen_range(0.1..1.0);
            let jump = random_psd(&mut rng, d, 0.3);
            let jump = &jump + &SymMatrix::identity(d).scale(0.2);
            let step = StepPath::new(vec![rng.gen_range(0.1..0.9)], vec![SymMatrix::zeros(d), jump]).unwrap();
            let q = RampStepPath::new(c, step).unwrap();
            let c0 = uparrow_certificate(&q).constant().unwrap();
            let a = random_sym(&mut rng, d, 1.0);
            let b = random_sym(&mut rng, d, 1.0);
            let kappa = LipschitzPath::from_fn(d, 32, |u| &a.scale(u) + &b.scale((3.0 * u).sin())).unwrap();
            let eps = c0 / (2.0 * kappa.lipschitz());
            assert!(perturb_and_check(&q, &kappa, eps).member);
        }
    }
}
