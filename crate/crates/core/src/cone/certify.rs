//! Sampled certification of convexity, monotonicity and superlinear growth.

use rand::Rng;
use serde::Serialize;

use super::model::{XiKind, XiModel};
use crate::linalg::SymMatrix;
use crate::rng::{random_psd, stream};

/// A pair of cone points on which a check failed.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub a: SymMatrix,
    pub b: SymMatrix,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub checked: usize,
    pub witness: Option<Witness>,
}

impl CheckOutcome {
    fn new() -> Self {
        Self {
            passed: true,
            checked: 0,
            witness: None,
        }
    }

    fn fail(&mut self, a: &SymMatrix, b: &SymMatrix, detail: String) {
        if self.passed {
            self.passed = false;
            self.witness = Some(Witness {
                a: a.clone(),
                b: b.clone(),
                detail,
            });
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    pub n_samples: usize,
    pub seed: u64,
    pub monotone_value: CheckOutcome,
    pub monotone_gradient: CheckOutcome,
    pub convexity: CheckOutcome,
    /// Midpoint margin check. Mandatory for catalogue kinds flagged strictly
    /// convex; for monomial sums it only decides the strictness flag.
    pub strict_convexity: Option<CheckOutcome>,
    pub strict_required: bool,
    pub superlinear: CheckOutcome,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.monotone_value.passed
            && self.monotone_gradient.passed
            && self.convexity.passed
            && self.superlinear.passed
            && (!self.strict_required || self.strict_convexity.as_ref().is_some_and(|s| s.passed))
    }
}

fn random_cone_point(rng: &mut impl Rng, dim: usize) -> SymMatrix {
    let scale = rng.gen_range(0.0..2.0);
    random_psd(rng, dim, scale)
}

/// Samples ordered pairs, midpoints and rays; never errors.
pub fn check_model(model: &XiModel, n_samples: usize, seed: u64) -> CertificationReport {
    let d = model.dim();
    let n = n_samples.max(1);
    let mut rng = stream(seed, "check_model", 0);
    let xi = |a: &SymMatrix| model.eval_unchecked(a);

    let mut mono_v = CheckOutcome::new();
    let mut mono_g = CheckOutcome::new();
    for _ in 0..n {
        let b = random_cone_point(&mut rng, d);
        let step = random_cone_point(&mut rng, d);
        let a = &b + &step;
        let (fa, fb) = (xi(&a), xi(&b));
        mono_v.checked += 1;
        if fa < fb - 1e-12 * (1.0 + fa.abs() + fb.abs()) {
            mono_v.fail(&a, &b, format!("ξ(a) = {fa:e} < ξ(b) = {fb:e}"));
        }
        let (ga, gb) = (model.grad_unchecked(&a), model.grad_unchecked(&b));
        let diff = &ga - &gb;
        let lo = diff.min_eig();
        mono_g.checked += 1;
        if lo < -1e-10 * (1.0 + ga.norm() + gb.norm()) {
            mono_g.fail(&a, &b, format!("∇ξ(a) − ∇ξ(b) has eigenvalue {lo:e}"));
        }
    }

    let strict_required = model.is_catalogue() && model.strictly_convex();
    let check_strict = strict_required || matches!(model.kind(), XiKind::MonomialSum { .. });
    let mut convex = CheckOutcome::new();
    let mut strict = CheckOutcome::new();
    for _ in 0..n {
        let a = random_cone_point(&mut rng, d);
        let b = random_cone_point(&mut rng, d);
        let mid = (&a + &b).scale(0.5);
        let (fa, fb, fm) = (xi(&a), xi(&b), xi(&mid));
        let margin = 0.5 * (fa + fb) - fm;
        let slack = 1e-12 * (1.0 + fa.abs() + fb.abs());
        convex.checked += 1;
        if margin < -slack {
            convex.fail(&a, &b, format!("midpoint excess {:e}", -margin));
        }
        if check_strict && a.dist(&b) > 1e-6 {
            strict.checked += 1;
            if margin <= slack {
                strict.fail(&a, &b, format!("midpoint margin {margin:e} not positive"));
            }
        }
    }

    let mut superlinear = CheckOutcome::new();
    let radii = [10.0, 100.0, 1000.0];
    for _ in 0..n.min(64) {
        let dir = random_psd(&mut rng, d, 1.0);
        let r: Vec<f64> = radii.iter().map(|&s| xi(&dir.scale(s)) / s).collect();
        superlinear.checked += 1;
        let tol = |x: f64| 1e-9 * (1.0 + x.abs());
        let growing = r[1] - r[0] > tol(r[0]) && r[2] - r[1] > tol(r[1]);
        // increments of ξ(Rx)/R must not shrink between decades
        let accelerating = r[2] - r[1] >= r[1] - r[0] - tol(r[1]);
        if !(growing && accelerating) {
            superlinear.fail(
                &dir,
                &dir,
                format!("ξ(Rx)/R at R = 10, 100, 1000: {:e}, {:e}, {:e}", r[0], r[1], r[2]),
            );
        }
    }

    CertificationReport {
        n_samples: n,
        seed,
        monotone_value: mono_v,
        monotone_gradient: mono_g,
        convexity: convex,
        strict_convexity: check_strict.then_some(strict),
        strict_required,
        superlinear,
    }
}
