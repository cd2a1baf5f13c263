//! Convex conjugate `ξ*(y) = sup_{b ⪰ 0} y·b − ξ(b)` by projected gradient ascent.

use serde::Serialize;

use super::model::{XiKind, XiModel};
use crate::error::{Error, Result};
use crate::linalg::{psd_project, PsdMatrix, SymMatrix};
use crate::rng::{random_psd, stream};

const MAX_RADIUS: f64 = 1.1e12;

#[derive(Clone, Debug)]
pub struct ConjugateOptions {
    /// Stop once `|b − Π₊(b + ∇φ(b))|_F ≤ tol`.
    pub tol: f64,
    pub n_starts: usize,
    pub max_iter: usize,
    /// Sufficient-increase fraction of the Armijo test.
    pub armijo: f64,
    /// Step shrink factor on a failed Armijo test.
    pub backtrack: f64,
}

impl ConjugateOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            n_starts: 16,
            max_iter: 5000,
            armijo: 0.5,
            backtrack: 0.8,
        }
    }
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        Self::with_tol(1e-11)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugateResult {
    pub value: f64,
    pub argmax: PsdMatrix,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// False when the best start hit `max_iter` or stalled above `tol`.
    pub converged: bool,
    /// Radius of the cone ball the starts were drawn from.
    pub radius: f64,
    /// Largest Frobenius distance between converged argmaxes.
    pub start_spread: f64,
}

struct Ascent {
    b: SymMatrix,
    value: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
}

fn objective(model: &XiModel, y: &SymMatrix, b: &SymMatrix) -> (f64, SymMatrix) {
    let v = y.dot(b) - model.eval_unchecked(b);
    let g = y - &model.grad_unchecked(b);
    (v, g)
}

fn kkt(b: &SymMatrix, g: &SymMatrix) -> f64 {
    b.dist(psd_project(&(b + g)).as_sym())
}

fn ascend(model: &XiModel, y: &SymMatrix, start: SymMatrix, opts: &ConjugateOptions) -> Ascent {
    let mut b = psd_project(&start).into_sym();
    let (mut value, mut g) = objective(model, y, &b);
    let mut step = 1.0;
    let mut residual = kkt(&b, &g);
    let mut it = 0;
    while it < opts.max_iter && residual > opts.tol {
        it += 1;
        let roundoff = 8.0 * f64::EPSILON * (value.abs() + y.dot(&b).abs() + 1.0);
        let mut s = step;
        let mut accepted = None;
        for _ in 0..200 {
            let bn = psd_project(&(&b + &g.scale(s))).into_sym();
            let d = &bn - &b;
            let (vn, gn) = objective(model, y, &bn);
            if vn >= value + opts.armijo * g.dot(&d) - roundoff {
                accepted = Some((bn, d, vn, gn, s));
                break;
            }
            s *= opts.backtrack;
        }
        let Some((bn, d, vn, gn, s_used)) = accepted else {
            break;
        };
        // Barzilai–Borwein step for the next iteration
        let curv = -(&gn - &g).dot(&d);
        let dd = d.dot(&d);
        step = if curv > 0.0 && dd > 0.0 {
            (dd / curv).clamp(1e-12, 1e12)
        } else {
            (2.0 * s_used).min(1e12)
        };
        b = bn;
        value = vn;
        g = gn;
        residual = kkt(&b, &g);
        if dd == 0.0 && residual > opts.tol {
            break;
        }
    }
    Ascent {
        converged: residual <= opts.tol,
        b,
        value,
        iterations: it,
        residual,
    }
}

fn check_usable(model: &XiModel, y: &SymMatrix) -> Result<()> {
    y.check_dim(model.dim())?;
    if !y.is_finite() {
        return Err(Error::NonFinite("conjugate argument"));
    }
    if matches!(model.kind(), XiKind::MonomialSum { .. }) && !model.is_admissible() {
        return Err(Error::Uncertified);
    }
    Ok(())
}

fn unit_rays(model: &XiModel, y: &SymMatrix) -> Vec<SymMatrix> {
    let d = model.dim();
    let mut rays = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        rays.push(SymMatrix::outer(&e));
    }
    rays.push(SymMatrix::identity(d).scale(1.0 / (d as f64).sqrt()));
    let (vals, vecs) = y.eigen();
    for (k, &l) in vals.iter().enumerate() {
        if l > 0.0 {
            let v: Vec<f64> = vecs.column(k).iter().copied().collect();
            rays.push(SymMatrix::outer(&v));
        }
    }
    let pos = psd_project(y).into_sym();
    if pos.norm() > 0.0 {
        rays.push(pos.scale(1.0 / pos.norm()));
    }
    let mut rng = stream(0, "conjugate_rays", d as u64);
    for _ in 0..32 {
        rays.push(random_psd(&mut rng, d, 1.0));
    }
    rays
}

/// Smallest `R ∈ {1, 2, 4, ...}` with `y·b − ξ(b) < 0` on every sampled ray at `|b|_F = R`.
pub fn search_radius(model: &XiModel, y: &SymMatrix) -> Result<f64> {
    check_usable(model, y)?;
    let rays = unit_rays(model, y);
    let mut r = 1.0;
    while r <= MAX_RADIUS {
        let worst = rays
            .iter()
            .map(|d| {
                let b = d.scale(r);
                y.dot(&b) - model.eval_unchecked(&b)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < 0.0 {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::NotSuperlinear { radius: MAX_RADIUS })
}

pub fn conjugate_with(model: &XiModel, y: &SymMatrix, opts: &ConjugateOptions) -> Result<ConjugateResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::OutOfRange("conjugate tolerance must be positive".into()));
    }
    let radius = search_radius(model, y)?;
    let d = model.dim();
    let mut starts = vec![SymMatrix::zeros(d)];
    let pos = psd_project(y).into_sym();
    if pos.norm() > 0.0 {
        starts.push(pos.scale(radius.min(pos.norm()) / pos.norm() * 0.5));
    }
    let mut rng = stream(0, "conjugate_starts", d as u64);
    while starts.len() < opts.n_starts.max(1) {
        let s = radius * rand::Rng::gen_range(&mut rng, 0.0..1.0);
        starts.push(random_psd(&mut rng, d, s));
    }

    let runs: Vec<Ascent> = starts.into_iter().map(|s| ascend(model, y, s, opts)).collect();
    let mut spread: f64 = 0.0;
    let conv: Vec<&Ascent> = runs.iter().filter(|r| r.converged).collect();
    for (i, a) in conv.iter().enumerate() {
        for b in &conv[i + 1..] {
            spread = spread.max(a.b.dist(&b.b));
        }
    }
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let best = runs
        .into_iter()
        .max_by(|a, b| {
            (a.converged, a.value)
                .partial_cmp(&(b.converged, b.value))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one start");
    Ok(ConjugateResult {
        value: best.value,
        argmax: PsdMatrix::new(best.b).expect("iterates are projected"),
        iterations,
        kkt_residual: best.residual,
        converged: best.converged,
        radius,
        start_spread: spread,
    })
}

/// `ξ*(y)` with the default multistart settings at tolerance `tol`.
pub fn conjugate_xi(model: &XiModel, y: &SymMatrix, tol: f64) -> Result<ConjugateResult> {
    conjugate_with(model, y, &ConjugateOptions::with_tol(tol))
}

/// `∇ξ*(y)`, the unique maximizer when `ξ` is strictly convex on the cone.
pub fn grad_conjugate(model: &XiModel, y: &SymMatrix, tol: f64) -> Result<PsdMatrix> {
    if !model.strictly_convex() {
        return Err(Error::InvalidModel(
            "gradient of the conjugate needs a strictly convex model".into(),
        ));
    }
    Ok(conjugate_xi(model, y, tol)?.argmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::random_sym;

    #[test]
    fn sk_closed_forms() {
        let m = XiModel::sk(1.0);
        let r = conjugate_xi(&m, &SymMatrix::scalar(-1.0), 1e-11).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.argmax.as_sym().get(0, 0), 0.0);
        let r = conjugate_xi(&m, &SymMatrix::scalar(2.0), 1e-11).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!((r.argmax.as_sym().get(0, 0) - 1.0).abs() < 1e-10);
        assert!(r.converged && r.kkt_residual <= 1e-11);
    }

    #[test]
    fn frobenius_closed_form() {
        let m = XiModel::frobenius_square(3, 0.5).unwrap();
        let mut rng = stream(4, "t", 0);
        for _ in 0..20 {
            let y = random_sym(&mut rng, 3, 1.5);
            let p = psd_project(&y).into_sym();
            let r = conjugate_xi(&m, &y, 1e-11).unwrap();
            assert!((r.value - 0.5 * p.dot(&p)).abs() < 1e-10);
            assert!(r.argmax.as_sym().dist(&p) < 1e-9);
        }
    }

    #[test]
    fn inversion_examples() {
        let m = XiModel::sk(1.0);
        let b = grad_conjugate(&m, &SymMatrix::scalar(0.6), 1e-11).unwrap();
        assert!((b.as_sym().get(0, 0) - 0.3).abs() < 1e-9);
        let b = grad_conjugate(&m, &SymMatrix::scalar(0.0), 1e-11).unwrap();
        assert_eq!(b.as_sym().get(0, 0), 0.0);
    }

    #[test]
    fn linear_model_is_refused() {
        let m = XiModel::scalar_mixed_pspin(vec![1.0]).unwrap();
        assert!(matches!(
            conjugate_xi(&m, &SymMatrix::scalar(2.0), 1e-10),
            Err(Error::NotSuperlinear { .. })
        ));
    }

    #[test]
    fn uncertified_monomial_is_refused() {
        let m = XiModel::monomial_sum(
            1,
            vec![super::super::model::Monomial {
                coefficient: 1.0,
                entries: vec![(0, 0), (0, 0)],
            }],
        )
        .unwrap();
        assert!(matches!(
            conjugate_xi(&m, &SymMatrix::scalar(1.0), 1e-10),
            Err(Error::Uncertified)
        ));
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(conjugate_xi(&XiModel::sk(1.0), &SymMatrix::scalar(1.0), 0.0).is_err());
    }
}
