//! Nondecreasing càdlàg paths `[0,1) → S^D_+`.
//!
//! Paths are stored exactly: step paths as breakpoints plus values, ramp paths
//! as a slope times the identity on top of a step path. Only Lipschitz
//! directions are grid-sampled.

mod certificate;
mod law;

pub use certificate::{perturb_and_check, uparrow_certificate, Certificate, PerturbCheck};
pub use law::{law_map, quantile_path, scalar_law};

use serde::{Deserialize, Serialize};

use crate::cone::XiModel;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Anything that can be evaluated on `[0,1)` and averaged over cells.
pub trait MatrixPath {
    fn dim(&self) -> usize;
    /// Right-continuous value at `u ∈ [0,1)`; no range check.
    fn value(&self, u: f64) -> SymMatrix;
    /// Left limit at `u ∈ (0,1]`.
    fn left_limit(&self, u: f64) -> SymMatrix;
    /// Interior points where the path jumps or changes slope.
    fn knots(&self) -> Vec<f64>;
    /// `(hi − lo)⁻¹ ∫_lo^hi path(u) du`.
    fn cell_mean(&self, lo: f64, hi: f64) -> SymMatrix;

    fn eval(&self, u: f64) -> Result<SymMatrix> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::OutOfRange(format!("path evaluated at u = {u}")));
        }
        Ok(self.value(u))
    }
}

/// Exact affine pieces `base + u·slope·Id` on `[lo, hi)`.
#[derive(Clone, Debug)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub base: SymMatrix,
    pub slope: f64,
}

pub trait AffinePieces: MatrixPath {
    fn pieces(&self) -> Vec<Piece>;
}

fn increment_check(prev: &SymMatrix, next: &SymMatrix, index: usize) -> Result<()> {
    let inc = next - prev;
    let lo = inc.min_eig();
    let tol = 1e-10 * (1.0 + prev.norm() + next.norm());
    if lo < -tol {
        return Err(Error::NonMonotone { index, min_eig: lo });
    }
    Ok(())
}

/// `q = Σ_k q_k 1_[ζ_k, ζ_{k+1})` with `ζ_0 = 0`, `ζ_{K+1} = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPath {
    dim: usize,
    breakpoints: Vec<f64>,
    values: Vec<SymMatrix>,
}

impl StepPath {
    /// `breakpoints` are `ζ_1 < ... < ζ_K` in `(0,1)`, `values` are `q_0 ≤ ... ≤ q_K`.
    /// Consecutive equal values are merged.
    pub fn new(breakpoints: Vec<f64>, values: Vec<SymMatrix>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidPath(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        let dim = values[0].dim();
        for v in &values {
            v.check_dim(dim)?;
            if !v.is_finite() {
                return Err(Error::NonFinite("path value"));
            }
        }
        let mut prev = 0.0;
        for &z in &breakpoints {
            if !(z > prev && z < 1.0) {
                return Err(Error::InvalidPath(format!(
                    "breakpoints must increase strictly inside (0,1); got {breakpoints:?}"
                )));
            }
            prev = z;
        }
        if !values[0].is_psd() {
            return Err(Error::NotPsd {
                min_eig: values[0].min_eig(),
            });
        }
        for k in 1..values.len() {
            increment_check(&values[k - 1], &values[k], k)?;
        }
        let mut bps = Vec::with_capacity(breakpoints.len());
        let mut vals = vec![values[0].clone()];
        for (z, v) in breakpoints.into_iter().zip(values.into_iter().skip(1)) {
            if v.approx_eq(vals.last().expect("nonempty")) {
                continue;
            }
            bps.push(z);
            vals.push(v);
        }
        Ok(Self {
            dim,
            breakpoints: bps,
            values: vals,
        })
    }

    pub fn constant(a: SymMatrix) -> Result<Self> {
        Self::new(vec![], vec![a])
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            breakpoints: vec![],
            values: vec![SymMatrix::zeros(dim)],
        }
    }

    /// Number of jumps `K`.
    pub fn levels(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[SymMatrix] {
        &self.values
    }

    /// `[0, ζ_1, ..., ζ_K, 1]`.
    pub fn zetas(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.breakpoints.len() + 2);
        z.push(0.0);
        z.extend_from_slice(&self.breakpoints);
        z.push(1.0);
        z
    }

    /// `(lo, hi, value)` for every constant segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &SymMatrix)> + '_ {
        let z = self.zetas();
        self.values
            .iter()
            .enumerate()
            .map(move |(k, v)| (z[k], z[k + 1], v))
    }

    pub fn segment_index(&self, u: f64) -> usize {
        self.breakpoints.partition_point(|&z| z <= u)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm() == 0.0)
    }

    /// Segment values scaled by `s ≥ 0`.
    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(
            self.breakpoints.clone(),
            self.values.iter().map(|v| v.scale(s)).collect(),
        )
    }

    pub fn to_spec(&self) -> PathSpec {
        PathSpec {
            kind: PathKind::Step,
            breakpoints: self.breakpoints.clone(),
            values: self.values.clone(),
            ramp_c: None,
        }
    }
}

impl Serialize for StepPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl MatrixPath for StepPath {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, u: f64) -> SymMatrix {
        self.values[self.segment_index(u)].clone()
    }

    fn left_limit(&self, u: f64) -> SymMatrix {
        let k = self.breakpoints.partition_point(|&z| z < u);
        self.values[k].clone()
    }

    fn knots(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn cell_mean(&self, lo: f64, hi: f64) -> SymMatrix {
        let mut acc = SymMatrix::zeros(self.dim);
        for (a, b, v) in self.segments() {
            let w = b.min(hi) - a.max(lo);
            if w > 0.0 {
                acc = &acc + &v.scale(w);
            }
        }
        acc.scale(1.0 / (hi - lo))
    }
}

impl AffinePieces for StepPath {
    fn pieces(&self) -> Vec<Piece> {
        self.segments()
            .map(|(lo, hi, v)| Piece {
                lo,
                hi,
                base: v.clone(),
                slope: 0.0,
            })
            .collect()
    }
}

/// `u ↦ u·c·Id + step(u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RampStepPath {
    c: f64,
    step: StepPath,
}

impl RampStepPath {
    pub fn new(c: f64, step: StepPath) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidPath(format!("ramp slope must be ≥ 0, got {c}")));
        }
        Ok(Self { c, step })
    }

    /// Pure ramp `u·c·Id`.
    pub fn ramp(dim: usize, c: f64) -> Result<Self> {
        Self::new(c, StepPath::zero(dim))
    }

    pub fn slope(&self) -> f64 {
        self.c
    }

    pub fn step(&self) -> &StepPath {
        &self.step
    }

    pub fn to_spec(&self) -> PathSpec {
        PathSpec {
            kind: PathKind::RampStep,
            breakpoints: self.step.breakpoints.clone(),
            values: self.step.values.clone(),
            ramp_c: Some(self.c),
        }
    }
}

impl From<StepPath> for RampStepPath {
    fn from(step: StepPath) -> Self {
        Self { c: 0.0, step }
    }
}

impl MatrixPath for RampStepPath {
    fn dim(&self) -> usize {
        self.step.dim
    }

    fn value(&self, u: f64) -> SymMatrix {
        let mut v = self.step.value(u);
        if self.c != 0.0 {
            v = &v + &SymMatrix::identity(self.step.dim).scale(u * self.c);
        }
        v
    }

    fn left_limit(&self, u: f64) -> SymMatrix {
        let mut v = self.step.left_limit(u);
        if self.c != 0.0 {
            v = &v + &SymMatrix::identity(self.step.dim).scale(u * self.c);
        }
        v
    }

    fn knots(&self) -> Vec<f64> {
        self.step.knots()
    }

    fn cell_mean(&self, lo: f64, hi: f64) -> SymMatrix {
        let m = self.step.cell_mean(lo, hi);
        &m + &SymMatrix::identity(self.step.dim).scale(0.5 * (lo + hi) * self.c)
    }
}

impl AffinePieces for RampStepPath {
    fn pieces(&self) -> Vec<Piece> {
        let mut p = self.step.pieces();
        for piece in &mut p {
            piece.slope = self.c;
        }
        p
    }
}

/// A Lipschitz direction sampled at `u_i = i/n`, linear in between.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzPath {
    values: Vec<SymMatrix>,
    lipschitz: f64,
}

impl LipschitzPath {
    /// Samples `f` at `i/n`, `i = 0..=n`; requires `f(0) = 0`.
    pub fn from_fn(dim: usize, n: usize, f: impl Fn(f64) -> SymMatrix) -> Result<Self> {
        let values: Vec<SymMatrix> = (0..=n.max(1)).map(|i| f(i as f64 / n.max(1) as f64)).collect();
        Self::from_samples(dim, values)
    }

    pub fn from_samples(dim: usize, values: Vec<SymMatrix>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidPath("a Lipschitz path needs at least two samples".into()));
        }
        for v in &values {
            v.check_dim(dim)?;
            if !v.is_finite() {
                return Err(Error::NonFinite("Lipschitz path sample"));
            }
        }
        if values[0].norm() > 1e-14 {
            return Err(Error::InvalidPath("a perturbation direction must vanish at 0".into()));
        }
        let n = (values.len() - 1) as f64;
        let lipschitz = values
            .windows(2)
            .map(|w| w[0].dist(&w[1]) * n)
            .fold(0.0, f64::max);
        Ok(Self { values, lipschitz })
    }

    pub fn zero(dim: usize, n: usize) -> Self {
        Self::from_fn(dim, n, |_| SymMatrix::zeros(dim)).expect("zero path is valid")
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn resolution(&self) -> usize {
        self.values.len() - 1
    }

    pub fn samples(&self) -> &[SymMatrix] {
        &self.values
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v.scale(s)).collect(),
            lipschitz: self.lipschitz * s.abs(),
        }
    }

    /// Pointwise sum; both directions must share the sampling grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.values.len() != other.values.len() {
            return Err(Error::InvalidPath("Lipschitz paths on different grids".into()));
        }
        let dim = self.values[0].dim();
        Self::from_samples(
            dim,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        )
    }

    fn interp(&self, u: f64) -> SymMatrix {
        let n = self.resolution();
        let x = (u.clamp(0.0, 1.0) * n as f64).min(n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let f = x - i as f64;
        &self.values[i].scale(1.0 - f) + &self.values[i + 1].scale(f)
    }

    /// Exact integral of the piecewise linear interpolant over `[lo, hi]`.
    fn integral(&self, lo: f64, hi: f64) -> SymMatrix {
        let n = self.resolution() as f64;
        let mut pts = vec![lo];
        let first = (lo * n).floor() as usize + 1;
        let mut i = first;
        while (i as f64) / n < hi {
            pts.push(i as f64 / n);
            i += 1;
        }
        pts.push(hi);
        let mut acc = SymMatrix::zeros(self.values[0].dim());
        for w in pts.windows(2) {
            let h = w[1] - w[0];
            if h > 0.0 {
                let s = &self.interp(w[0]) + &self.interp(w[1]);
                acc = &acc + &s.scale(0.5 * h);
            }
        }
        acc
    }

    /// `⟨p, κ⟩_{L²}` against a step path, exact.
    pub fn inner_step(&self, p: &StepPath) -> f64 {
        p.segments()
            .map(|(lo, hi, v)| v.dot(&self.integral(lo, hi)))
            .sum()
    }
}

impl MatrixPath for LipschitzPath {
    fn dim(&self) -> usize {
        self.values[0].dim()
    }

    fn value(&self, u: f64) -> SymMatrix {
        self.interp(u)
    }

    fn left_limit(&self, u: f64) -> SymMatrix {
        self.interp(u)
    }

    fn knots(&self) -> Vec<f64> {
        let n = self.resolution();
        (1..n).map(|i| i as f64 / n as f64).collect()
    }

    fn cell_mean(&self, lo: f64, hi: f64) -> SymMatrix {
        self.integral(lo, hi).scale(1.0 / (hi - lo))
    }
}

/// `base + ε·κ`.
#[derive(Clone, Debug)]
pub struct Perturbed<'a, P: MatrixPath> {
    pub base: &'a P,
    pub direction: &'a LipschitzPath,
    pub eps: f64,
}

impl<P: MatrixPath> MatrixPath for Perturbed<'_, P> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, u: f64) -> SymMatrix {
        &self.base.value(u) + &self.direction.value(u).scale(self.eps)
    }

    fn left_limit(&self, u: f64) -> SymMatrix {
        &self.base.left_limit(u) + &self.direction.left_limit(u).scale(self.eps)
    }

    fn knots(&self) -> Vec<f64> {
        let mut k = self.base.knots();
        k.extend(self.direction.knots());
        sort_dedup(&mut k);
        k
    }

    fn cell_mean(&self, lo: f64, hi: f64) -> SymMatrix {
        &self.base.cell_mean(lo, hi) + &self.direction.cell_mean(lo, hi).scale(self.eps)
    }
}

pub(crate) fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
}

/// Cell boundaries `0 = g_0 < ... < g_n = 1` made of `k/cells` and the path's knots.
pub fn merged_grid(cells: usize, knots: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=cells.max(1)).map(|k| k as f64 / cells.max(1) as f64).collect();
    g.extend(knots.iter().copied().filter(|&z| z > 0.0 && z < 1.0));
    sort_dedup(&mut g);
    g
}

/// Step path of cell means on the grid `0 = g_0 < ... < g_n = 1`.
pub fn discretize(path: &impl MatrixPath, grid: &[f64]) -> Result<StepPath> {
    if grid.len() < 2 || grid[0] != 0.0 || *grid.last().expect("nonempty") != 1.0 {
        return Err(Error::Grid("cell grid must run from 0 to 1".into()));
    }
    let values = grid.windows(2).map(|w| path.cell_mean(w[0], w[1])).collect();
    StepPath::new(grid[1..grid.len() - 1].to_vec(), values)
}

fn merged_pieces(a: &dyn AffinePieces, b: &dyn AffinePieces) -> Vec<(f64, f64, SymMatrix, f64)> {
    let pa = a.pieces();
    let pb = b.pieces();
    let mut cuts: Vec<f64> = pa.iter().chain(pb.iter()).flat_map(|p| [p.lo, p.hi]).collect();
    sort_dedup(&mut cuts);
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        while pa[i].hi <= lo {
            i += 1;
        }
        while pb[j].hi <= lo {
            j += 1;
        }
        out.push((lo, hi, &pa[i].base - &pb[j].base, pa[i].slope - pb[j].slope));
    }
    out
}

/// `∫_lo^hi sqrt(a u² + b u + c) du` for a nonnegative quadratic.
fn sqrt_quadratic_integral(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> f64 {
    if a <= 0.0 {
        // linear or constant under the root; here a = 0 forces b = 0 up to round-off
        return (c.max(0.0)).sqrt() * (hi - lo);
    }
    let u0 = -b / (2.0 * a);
    let k2 = (c / a - u0 * u0).max(0.0);
    let k = k2.sqrt();
    let anti = |u: f64| {
        let s = u - u0;
        if k == 0.0 {
            0.5 * s * s.abs()
        } else {
            0.5 * s * (s * s + k2).sqrt() + 0.5 * k2 * (s / k).asinh()
        }
    };
    a.sqrt() * (anti(hi) - anti(lo))
}

/// `(∫_0^1 |p1(u) − p2(u)|_F^order du)^{1/order}`, `order ∈ {1, 2}`, integrated exactly.
pub fn lp_distance(p1: &dyn AffinePieces, p2: &dyn AffinePieces, order: u32) -> Result<f64> {
    if p1.dim() != p2.dim() {
        return Err(Error::DimensionMismatch {
            expected: p1.dim(),
            got: p2.dim(),
        });
    }
    let d = p1.dim() as f64;
    let mut total = 0.0;
    for (lo, hi, m, s) in merged_pieces(p1, p2) {
        // |M + u s Id|² = |M|² + 2 u s tr M + u² s² D
        let qa = s * s * d;
        let qb = 2.0 * s * m.trace();
        let qc = m.dot(&m);
        total += match order {
            2 => qc * (hi - lo) + qb * (hi * hi - lo * lo) / 2.0 + qa * (hi.powi(3) - lo.powi(3)) / 3.0,
            1 => sqrt_quadratic_integral(qa, qb, qc, lo, hi),
            _ => return Err(Error::OutOfRange(format!("L^p order {order} (expected 1 or 2)"))),
        };
    }
    Ok(if order == 2 { total.max(0.0).sqrt() } else { total })
}

/// `⟨p, q⟩_{L²}` for piecewise affine paths, exact.
pub fn l2_inner(p1: &dyn AffinePieces, p2: &dyn AffinePieces) -> Result<f64> {
    if p1.dim() != p2.dim() {
        return Err(Error::DimensionMismatch {
            expected: p1.dim(),
            got: p2.dim(),
        });
    }
    let pa = p1.pieces();
    let pb = p2.pieces();
    let mut cuts: Vec<f64> = pa.iter().chain(pb.iter()).flat_map(|p| [p.lo, p.hi]).collect();
    sort_dedup(&mut cuts);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        while pa[i].hi <= lo {
            i += 1;
        }
        while pb[j].hi <= lo {
            j += 1;
        }
        let (a, b) = (&pa[i], &pb[j]);
        // (A + u s Id)·(B + u r Id)
        let c0 = a.base.dot(&b.base);
        let c1 = a.slope * b.base.trace() + b.slope * a.base.trace();
        let c2 = a.slope * b.slope * p1.dim() as f64;
        total += c0 * (hi - lo) + c1 * (hi * hi - lo * lo) / 2.0 + c2 * (hi.powi(3) - lo.powi(3)) / 3.0;
    }
    Ok(total)
}

/// `q + t·∇ξ∘p` on the merged breakpoints of `q` and `p`.
pub fn compose_grad_xi(q: &RampStepPath, t: f64, p: &StepPath, model: &XiModel) -> Result<RampStepPath> {
    if !(t >= 0.0) {
        return Err(Error::OutOfRange(format!("t = {t}")));
    }
    if q.dim() != model.dim() || p.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: if q.dim() != model.dim() { q.dim() } else { p.dim() },
        });
    }
    let mut cuts = q.step.breakpoints.clone();
    cuts.extend_from_slice(&p.breakpoints);
    sort_dedup(&mut cuts);
    let mut starts = vec![0.0];
    starts.extend_from_slice(&cuts);
    let mut values = Vec::with_capacity(starts.len());
    for &u in &starts {
        let g = model.grad(&p.value(u))?;
        values.push(&q.step.value(u) + &g.scale(t));
    }
    let step = StepPath::new(cuts, values).map_err(|e| match e {
        Error::NonMonotone { index, min_eig } => Error::InvalidModel(format!(
            "q + t∇ξ(p) decreases at segment {index} (eigenvalue {min_eig:e}); ∇ξ is not monotone on the cone"
        )),
        other => other,
    })?;
    RampStepPath::new(q.c, step)
}

/// Config form `{type, breakpoints, values, ramp_c}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    #[serde(rename = "type")]
    pub kind: PathKind,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub values: Vec<SymMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_c: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Step,
    RampStep,
}

impl PathSpec {
    pub fn build(&self) -> Result<RampStepPath> {
        let step = StepPath::new(self.breakpoints.clone(), self.values.clone())?;
        match (self.kind, self.ramp_c) {
            (PathKind::Step, None) => Ok(step.into()),
            (PathKind::Step, Some(_)) => Err(Error::Config("ramp_c given for a step path".into())),
            (PathKind::RampStep, c) => RampStepPath::new(c.unwrap_or(0.0), step),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_psd, stream};
    use rand::Rng;

    pub(crate) fn random_step(rng: &mut impl Rng, dim: usize, k: usize) -> StepPath {
        // breakpoints on multiples of 1/500 so midpoint Riemann oracles stay exact at jumps
        let mut z: Vec<f64> = (0..k).map(|_| rng.gen_range(10..490) as f64 / 500.0).collect();
        z.sort_by(f64::total_cmp);
        z.dedup();
        let s0 = rng.gen_range(0.0..0.5);
        let mut v = vec![random_psd(rng, dim, s0)];
        for _ in 0..z.len() {
            let s = rng.gen_range(0.05..0.5);
            let inc = random_psd(rng, dim, s);
            v.push(v.last().unwrap() + &inc);
        }
        StepPath::new(z, v).unwrap()
    }

    #[test]
    fn evaluation_is_right_continuous() {
        let p = StepPath::new(vec![0.5], vec![SymMatrix::scalar(1.0), SymMatrix::scalar(2.0)]).unwrap();
        assert_eq!(p.eval(0.5).unwrap().get(0, 0), 2.0);
        assert_eq!(p.eval(0.4999).unwrap().get(0, 0), 1.0);
        assert_eq!(p.left_limit(0.5).get(0, 0), 1.0);
        assert!(p.eval(1.0).is_err());
        assert!(p.eval(-0.1).is_err());
        assert_eq!(StepPath::zero(2).eval(0.7).unwrap(), SymMatrix::zeros(2));
        let r = RampStepPath::ramp(2, 1.0).unwrap();
        assert!(r.eval(0.3).unwrap().approx_eq(&SymMatrix::identity(2).scale(0.3)));
    }

    #[test]
    fn construction_validates_and_merges() {
        let s = |x| SymMatrix::scalar(x);
        assert!(StepPath::new(vec![0.5], vec![s(2.0), s(1.0)]).is_err());
        assert!(StepPath::new(vec![0.5, 0.4], vec![s(0.0), s(1.0), s(2.0)]).is_err());
        assert!(StepPath::new(vec![1.0], vec![s(0.0), s(1.0)]).is_err());
        assert!(StepPath::new(vec![], vec![s(-1.0)]).is_err());
        let m = StepPath::new(vec![0.3, 0.6], vec![s(0.0), s(1.0), s(1.0)]).unwrap();
        assert_eq!(m.levels(), 1);
        assert_eq!(m.breakpoints(), &[0.3]);
    }

    #[test]
    fn lp_distance_examples() {
        let a = StepPath::constant(SymMatrix::scalar(0.0)).unwrap();
        let b = StepPath::constant(SymMatrix::scalar(1.0)).unwrap();
        assert_eq!(lp_distance(&a, &a, 1).unwrap(), 0.0);
        assert_eq!(lp_distance(&a, &b, 1).unwrap(), 1.0);
        assert_eq!(lp_distance(&a, &b, 2).unwrap(), 1.0);
        assert!(lp_distance(&a, &StepPath::zero(2), 2).is_err());
    }

    fn riemann(p1: &dyn MatrixPath, p2: &dyn MatrixPath, order: i32, n: usize) -> f64 {
        let s: f64 = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                p1.value(u).dist(&p2.value(u)).powi(order)
            })
            .sum::<f64>()
            / n as f64;
        s.powf(1.0 / order as f64)
    }

    #[test]
    fn lp_distance_matches_riemann_sums() {
        let mut rng = stream(11, "lp", 0);
        for _ in 0..10 {
            let d = rng.gen_range(1..=3);
            let a = RampStepPath::new(rng.gen_range(0.0..1.0), random_step(&mut rng, d, 3)).unwrap();
            let b = RampStepPath::new(rng.gen_range(0.0..1.0), random_step(&mut rng, d, 2)).unwrap();
            for order in [1, 2] {
                let exact = lp_distance(&a, &b, order).unwrap();
                let approx = riemann(&a, &b, order as i32, 100_000);
                assert!((exact - approx).abs() < 1e-6, "{exact} vs {approx}");
            }
        }
    }

    #[test]
    fn l2_inner_matches_riemann_sum() {
        let mut rng = stream(12, "inner", 0);
        let a = RampStepPath::new(0.4, random_step(&mut rng, 2, 3)).unwrap();
        let b = RampStepPath::new(0.7, random_step(&mut rng, 2, 4)).unwrap();
        let n = 200_000;
        let approx: f64 = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                a.value(u).dot(&b.value(u))
            })
            .sum::<f64>()
            / n as f64;
        assert!((l2_inner(&a, &b).unwrap() - approx).abs() < 1e-8);
    }

    #[test]
    fn compose_examples() {
        let xi = XiModel::sk(1.0);
        let q: RampStepPath = StepPath::zero(1).into();
        let p = StepPath::constant(SymMatrix::scalar(0.5)).unwrap();
        let c = compose_grad_xi(&q, 1.0, &p, &xi).unwrap();
        assert_eq!(c.eval(0.2).unwrap().get(0, 0), 1.0);
        let c0 = compose_grad_xi(&q, 0.0, &p, &xi).unwrap();
        assert!(c0.step().is_zero());
    }

    #[test]
    fn compose_matches_pointwise_formula() {
        let mut rng = stream(13, "compose", 0);
        let xi = XiModel::frobenius_square(2, 0.7).unwrap();
        let q = RampStepPath::new(0.3, random_step(&mut rng, 2, 3)).unwrap();
        let p = random_step(&mut rng, 2, 4);
        let t = 0.8;
        let c = compose_grad_xi(&q, t, &p, &xi).unwrap();
        for i in 0..100 {
            let u = i as f64 / 100.0;
            let direct = &q.value(u) + &xi.grad(&p.value(u)).unwrap().scale(t);
            assert!(c.value(u).dist(&direct) <= 1e-12 * (1.0 + direct.norm()));
        }
    }

    #[test]
    fn discretize_keeps_means_and_order() {
        let r = RampStepPath::new(1.0, StepPath::zero(1)).unwrap();
        let d = discretize(&r, &merged_grid(4, &[])).unwrap();
        assert_eq!(d.levels(), 3);
        assert!((d.values()[0].get(0, 0) - 0.125).abs() < 1e-15);
        assert!((d.values()[3].get(0, 0) - 0.875).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_constant_and_inner_product() {
        let k = LipschitzPath::from_fn(1, 10, |u| SymMatrix::scalar(2.0 * u)).unwrap();
        assert!((k.lipschitz() - 2.0).abs() < 1e-12);
        let p = StepPath::new(vec![0.5], vec![SymMatrix::scalar(1.0), SymMatrix::scalar(3.0)]).unwrap();
        // ∫_0^.5 2u + 3 ∫_.5^1 2u = 0.25 + 3·0.75
        assert!((k.inner_step(&p) - 2.5).abs() < 1e-14);
        assert!(LipschitzPath::from_fn(1, 4, |_| SymMatrix::scalar(1.0)).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let r = RampStepPath::new(0.2, StepPath::new(vec![0.5], vec![SymMatrix::zeros(1), SymMatrix::scalar(1.0)]).unwrap())
            .unwrap();
        let json = serde_json::to_string(&r.to_spec()).unwrap();
        assert!(json.contains("\"type\":\"ramp_step\""));
        let back: PathSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.build().unwrap(), r);
        assert!(serde_json::from_str::<PathSpec>(r#"{"type":"step","values":[[[0.0]]],"extra":1}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn lp_distance_is_a_metric(seed in 0u64..10_000) {
                let mut rng = stream(seed, "metric", 0);
                let d = rng.gen_range(1..=2);
                let a: RampStepPath = random_step(&mut rng, d, 3).into();
                let b = RampStepPath::new(rng.gen_range(0.0..1.0), random_step(&mut rng, d, 2)).unwrap();
                let c: RampStepPath = random_step(&mut rng, d, 4).into();
                for order in [1, 2] {
                    let ab = lp_distance(&a, &b, order).unwrap();
                    let ba = lp_distance(&b, &a, order).unwrap();
                    let ac = lp_distance(&a, &c, order).unwrap();
                    let cb = lp_distance(&c, &b, order).unwrap();
                    prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
                    prop_assert!(ab <= ac + cb + 1e-12);
                    prop_assert!(lp_distance(&a, &a, order).unwrap().abs() < 1e-12);
                }
            }
        }
    }
}
