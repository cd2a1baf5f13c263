//! The Parisi and Hopf–Lax variational problems at fixed `(t, q)`, the
//! critical-point system, and numerical probes of uniqueness and
//! differentiability of the value function.

mod critical;
mod optimize;
mod probes;
mod solve;

pub use critical::{critical_point_solve, CriticalOptions, CriticalPoint};
pub use probes::{
    frechet_probe, gateaux_fd, pde_residual, random_direction, uniqueness_probe, Assertion, FrechetReport,
    FrechetRow, GateauxReport, Instance, PdeReport, UniquenessReport,
};
pub use solve::{hopflax_solve, parisi_solve, parisi_solve_with, StartRecord, VariationalReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cascade::{psi_grid, PsiGridConfig, SpinLaw};
use crate::cone::{conjugate_with, ConjugateOptions, XiModel};
use crate::error::{Error, Result};
use crate::linalg::{psd_project, psd_sqrt, SymMatrix};
use crate::path::{merged_grid, MatrixPath, StepPath};

/// Discretization and optimizer settings shared by all solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationalConfig {
    /// Control segments `[k/K, (k+1)/K)`.
    pub k: usize,
    /// Cells per control segment used to average a non-step `q`.
    pub refine: usize,
    pub n_starts: usize,
    pub max_iter: usize,
    /// Central-difference step, scaled by `1 + |x|`.
    pub fd_step: f64,
    pub value_tol: f64,
    pub grad_tol: f64,
    /// Finishers within this distance of the best value form the cluster.
    pub cluster_value_tol: f64,
    pub conjugate_tol: f64,
    pub seed: u64,
    pub grid: PsiGridConfig,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self {
            k: 4,
            refine: 4,
            n_starts: 20,
            max_iter: 200,
            fd_step: 1e-4,
            value_tol: 1e-13,
            grad_tol: 1e-9,
            cluster_value_tol: 1e-4,
            conjugate_tol: 1e-11,
            seed: 0,
            grid: PsiGridConfig::default(),
        }
    }
}

impl VariationalConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.k == 0 || self.refine == 0 {
            return Err(Error::Config("k and refine must be positive".into()));
        }
        if self.n_starts == 0 || self.max_iter == 0 {
            return Err(Error::Config("n_starts and max_iter must be positive".into()));
        }
        for (name, v) in [
            ("fd_step", self.fd_step),
            ("value_tol", self.value_tol),
            ("grad_tol", self.grad_tol),
            ("cluster_value_tol", self.cluster_value_tol),
            ("conjugate_tol", self.conjugate_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Monotone chain `p_0 ⪯ ... ⪯ p_{K−1}` in `S^D_+` with `|p_{K−1}|_F ≤ 1`,
/// constant on `[k/K, (k+1)/K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control {
    values: Vec<SymMatrix>,
}

const FEASIBILITY_TOL: f64 = 1e-9;

impl Control {
    pub fn new(values: Vec<SymMatrix>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidPath("a control needs at least one segment".into()));
        }
        let d = values[0].dim();
        for v in &values {
            v.check_dim(d)?;
        }
        // validates PSD start and monotone increments
        StepPath::new(breaks(values.len()), values.clone())?;
        let top = values.last().expect("nonempty").norm();
        if top > 1.0 + FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!("|p|_F = {top} exceeds 1")));
        }
        Ok(Self { values })
    }

    /// Monotone PSD chain that may leave the unit ball, for difference quotients at the boundary.
    pub(crate) fn from_chain(values: Vec<SymMatrix>) -> Self {
        Self { values }
    }

    pub fn zero(k: usize, dim: usize) -> Self {
        Self {
            values: vec![SymMatrix::zeros(dim); k.max(1)],
        }
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn values(&self) -> &[SymMatrix] {
        &self.values
    }

    pub fn to_path(&self) -> StepPath {
        StepPath::new(breaks(self.k()), self.values.clone()).expect("controls are monotone")
    }

    /// `|p − p'|_{L²}` for controls on the same segments.
    pub fn l2_distance(&self, other: &Control) -> f64 {
        let k = self.k() as f64;
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.dist(b).powi(2) / k)
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_distance(&Control::zero(self.k(), self.dim()))
    }

    /// `∫ f(p(u)) du`.
    pub fn integral(&self, f: impl Fn(&SymMatrix) -> Result<f64>) -> Result<f64> {
        let k = self.k() as f64;
        self.values.iter().map(|v| Ok(f(v)? / k)).sum()
    }

    /// Feasible point closest in spirit to a monotone chain: negative parts of
    /// the increments are dropped and the chain is shrunk radially into the unit ball.
    pub fn make_feasible(values: &[SymMatrix]) -> Self {
        let mut out = Vec::with_capacity(values.len());
        let mut prev = SymMatrix::zeros(values[0].dim());
        for v in values {
            let next = &prev + psd_project(&(v - &prev)).as_sym();
            out.push(next.clone());
            prev = next;
        }
        let top = prev.norm();
        if top > 1.0 {
            out = out.iter().map(|v| v.scale(1.0 / top)).collect();
        }
        Self { values: out }
    }
}

pub(crate) fn breaks(k: usize) -> Vec<f64> {
    (1..k).map(|i| i as f64 / k as f64).collect()
}

fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Cumulative chain `Σ_{j≤k} L_j L_jᵀ` from lower-triangular factors.
pub(crate) fn chain_from_factors(x: &[f64], d: usize) -> Vec<SymMatrix> {
    let m = tri_len(d);
    let mut acc = DMatrix::zeros(d, d);
    x.chunks_exact(m)
        .map(|c| {
            let l = lower(c, d);
            acc += &l * l.transpose();
            SymMatrix::from_matrix(acc.clone()).expect("finite")
        })
        .collect()
}

fn lower(c: &[f64], d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    let mut idx = 0;
    for r in 0..d {
        for col in 0..=r {
            l[(r, col)] = c[idx];
            idx += 1;
        }
    }
    l
}

/// Lower-triangular factors of the increments of a monotone chain.
pub(crate) fn factors_from_chain(values: &[SymMatrix]) -> Vec<f64> {
    let d = values[0].dim();
    let mut out = Vec::with_capacity(values.len() * tri_len(d));
    let mut prev = SymMatrix::zeros(d);
    for v in values {
        let root = psd_sqrt(&(v - &prev));
        // root² = Rᵀ R with R upper triangular from the QR of root
        let r = root.matrix().transpose().qr().r();
        let l = r.transpose();
        for row in 0..d {
            for col in 0..=row {
                out.push(l[(row, col)]);
            }
        }
        prev = v.clone();
    }
    out
}

/// Gradient of `x ↦ Σ_c ⟨G_c, q_c(x)⟩` for the chain parametrization.
pub(crate) fn chain_gradient(x: &[f64], d: usize, g: &[SymMatrix]) -> Vec<f64> {
    let m = tri_len(d);
    let mut tail = DMatrix::zeros(d, d);
    let mut out = vec![0.0; x.len()];
    for i in (0..g.len()).rev() {
        tail += g[i].matrix();
        let l = lower(&x[i * m..(i + 1) * m], d);
        let grad = 2.0 * &tail * l;
        let mut idx = 0;
        for r in 0..d {
            for col in 0..=r {
                out[i * m + idx] = grad[(r, col)];
                idx += 1;
            }
        }
    }
    out
}

/// Scales the factors so the top of the chain has Frobenius norm at most `radius`.
pub(crate) fn project_chain(x: &mut [f64], d: usize, radius: f64) -> bool {
    let chain = chain_from_factors(x, d);
    let top = chain.last().map(|v| v.norm()).unwrap_or(0.0);
    if top > radius {
        let s = (radius / top).sqrt();
        for v in x.iter_mut() {
            *v *= s;
        }
        true
    } else {
        false
    }
}

/// A variational problem at fixed `(t, q)`: `q` is replaced by its cell means
/// on a grid that refines the control segments and contains the knots of `q`.
#[derive(Clone, Debug)]
pub struct Problem {
    t: f64,
    model: XiModel,
    law: SpinLaw,
    cfg: VariationalConfig,
    edges: Vec<f64>,
    q: Vec<SymMatrix>,
    block: Vec<usize>,
}

impl Problem {
    pub fn new(t: f64, q: &dyn MatrixPath, model: &XiModel, law: &SpinLaw, cfg: &VariationalConfig) -> Result<Self> {
        cfg.validate()?;
        let edges = merged_grid(cfg.k * cfg.refine, &q.knots());
        Self::on_grid(t, q, &edges, model, law, cfg)
    }

    /// As [`Problem::new`] on explicit cell edges, which must contain every `k/K`.
    pub fn on_grid(
        t: f64,
        q: &dyn MatrixPath,
        edges: &[f64],
        model: &XiModel,
        law: &SpinLaw,
        cfg: &VariationalConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::OutOfRange(format!("t = {t} must be finite and nonnegative")));
        }
        let d = model.dim();
        if q.dim() != d || law.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if q.dim() != d { q.dim() } else { law.dim() },
            });
        }
        if !model.is_admissible() {
            return Err(Error::Uncertified);
        }
        if edges.len() < 2 || edges[0] != 0.0 || *edges.last().expect("nonempty") != 1.0 {
            return Err(Error::Grid("cell edges must run from 0 to 1".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("cell edges must increase".into()));
        }
        let k = cfg.k;
        for j in 1..k {
            let z = j as f64 / k as f64;
            if !edges.iter().any(|e| (e - z).abs() <= 1e-14) {
                return Err(Error::Grid(format!("cell edges miss the control breakpoint {z}")));
            }
        }
        let values: Vec<SymMatrix> = edges.windows(2).map(|w| q.cell_mean(w[0], w[1])).collect();
        StepPath::new(edges[1..edges.len() - 1].to_vec(), values.clone())?;
        let block = edges
            .windows(2)
            .map(|w| (((w[0] + w[1]) / 2.0 * k as f64).floor() as usize).min(k - 1))
            .collect();
        Ok(Self {
            t,
            model: model.clone(),
            law: law.clone(),
            cfg: cfg.clone(),
            edges: edges.to_vec(),
            q: values,
            block,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &XiModel {
        &self.model
    }

    pub fn law(&self) -> &SpinLaw {
        &self.law
    }

    pub fn config(&self) -> &VariationalConfig {
        &self.cfg
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cells(&self) -> usize {
        self.q.len()
    }

    /// Cell means of `q`.
    pub fn q_cells(&self) -> &[SymMatrix] {
        &self.q
    }

    pub fn q_path(&self) -> StepPath {
        self.path(self.q.clone()).expect("validated on construction")
    }

    /// The same problem at another time.
    pub fn at_time(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::OutOfRange(format!("t = {t} must be finite and nonnegative")));
        }
        Ok(Self { t, ..self.clone() })
    }

    fn lens(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| w[1] - w[0])
    }

    pub(crate) fn path(&self, cells: Vec<SymMatrix>) -> Result<StepPath> {
        StepPath::new(self.edges[1..self.edges.len() - 1].to_vec(), cells)
    }

    pub(crate) fn psi_cells(&self, cells: Vec<SymMatrix>) -> Result<f64> {
        psi_grid(&self.path(cells)?, &self.law, &self.cfg.grid)
    }

    /// Per-cell values of a control.
    pub fn control_cells(&self, p: &Control) -> Result<Vec<SymMatrix>> {
        self.check_control(p)?;
        Ok(self.block.iter().map(|&b| p.values[b].clone()).collect())
    }

    /// Cell averages of per-cell matrices over each control segment.
    pub fn block_average(&self, cells: &[SymMatrix]) -> Vec<SymMatrix> {
        let d = self.dim();
        let mut acc = vec![SymMatrix::zeros(d); self.cfg.k];
        for ((b, len), v) in self.block.iter().zip(self.lens()).zip(cells) {
            acc[*b] = &acc[*b] + &v.scale(len * self.cfg.k as f64);
        }
        acc
    }

    fn check_control(&self, p: &Control) -> Result<()> {
        if p.k() != self.cfg.k {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.k,
                got: p.k(),
            });
        }
        p.values[0].check_dim(self.dim())
    }

    /// `q + t ∇ξ∘p` cell by cell.
    pub fn shifted(&self, p: &Control) -> Result<Vec<SymMatrix>> {
        let grads: Vec<SymMatrix> = p
            .values
            .iter()
            .map(|v| self.model.grad(v))
            .collect::<Result<_>>()?;
        self.check_control(p)?;
        Ok(self
            .q
            .iter()
            .zip(&self.block)
            .map(|(q, &b)| q + &grads[b].scale(self.t))
            .collect())
    }

    /// `ψ(q + t∇ξ∘p) − t ∫ θ(p)`.
    pub fn parisi_functional(&self, p: &Control) -> Result<f64> {
        let psi = self.psi_cells(self.shifted(p)?)?;
        let theta = p.integral(|v| self.model.theta(v))?;
        Ok(psi - self.t * theta)
    }

    fn conjugate_options(&self) -> ConjugateOptions {
        ConjugateOptions {
            n_starts: 2,
            ..ConjugateOptions::with_tol(self.cfg.conjugate_tol)
        }
    }

    /// `t ∫ ξ*((q' − q)/t)` and the per-cell maximizers `∇ξ*((q' − q)/t)`.
    pub(crate) fn transport_cost(&self, q_prime: &[SymMatrix]) -> Result<(f64, Vec<SymMatrix>)> {
        if !(self.t > 0.0) {
            return Err(Error::OutOfRange("the Hopf–Lax cost needs t > 0".into()));
        }
        if q_prime.len() != self.cells() {
            return Err(Error::DimensionMismatch {
                expected: self.cells(),
                got: q_prime.len(),
            });
        }
        let opts = self.conjugate_options();
        let mut cost = 0.0;
        let mut argmax = Vec::with_capacity(q_prime.len());
        for ((qp, q), len) in q_prime.iter().zip(&self.q).zip(self.lens()) {
            let y = (qp - q).scale(1.0 / self.t);
            let r = conjugate_with(&self.model, &y, &opts)?;
            cost += self.t * len * r.value;
            argmax.push(r.argmax.into_sym());
        }
        Ok((cost, argmax))
    }

    /// `ψ(q') − t ∫ ξ*((q' − q)/t)` for `q'` given cell by cell.
    pub fn hopflax_functional(&self, q_prime: &[SymMatrix]) -> Result<f64> {
        let (cost, _) = self.transport_cost(q_prime)?;
        Ok(self.psi_cells(q_prime.to_vec())? - cost)
    }

    /// `ψ(q') + ⟨p, q − q'⟩ + t ∫ ξ(p)`.
    pub fn j_functional(&self, q_prime: &[SymMatrix], p: &Control) -> Result<f64> {
        if q_prime.len() != self.cells() {
            return Err(Error::DimensionMismatch {
                expected: self.cells(),
                got: q_prime.len(),
            });
        }
        let pc = self.control_cells(p)?;
        let inner: f64 = pc
            .iter()
            .zip(&self.q)
            .zip(q_prime)
            .zip(self.lens())
            .map(|(((p, q), qp), len)| len * p.dot(&(q - qp)))
            .sum();
        let xi = p.integral(|v| self.model.eval(v))?;
        Ok(self.psi_cells(q_prime.to_vec())? + inner + self.t * xi)
    }

    /// `|a − b|_{L²}` for per-cell matrices.
    pub fn cell_distance(&self, a: &[SymMatrix], b: &[SymMatrix]) -> f64 {
        a.iter()
            .zip(b)
            .zip(self.lens())
            .map(|((a, b), len)| len * a.dist(b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest `|q'|_F` a Hopf–Lax maximizer can reach: `|q|_∞ + t sup_{|a|≤1} |∇ξ(a)|`.
    pub fn hopflax_radius(&self) -> f64 {
        let qmax = self.q.iter().map(|v| v.norm()).fold(0.0, f64::max);
        1.5 * (qmax + self.t * self.model.grad_bound_unit_ball()) + 1e-3
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::RampStepPath;
    use crate::rng::{random_psd, stream};
    use rand::Rng;

    pub(super) fn sk_problem(t: f64, c: f64, beta: f64) -> Problem {
        let q = RampStepPath::ramp(1, c).unwrap();
        Problem::new(t, &q, &XiModel::sk(beta), &SpinLaw::ising(), &VariationalConfig::default()).unwrap()
    }

    fn random_control(rng: &mut impl Rng, k: usize, d: usize) -> Control {
        let mut acc = SymMatrix::zeros(d);
        let mut vals = Vec::new();
        for _ in 0..k {
            let s = rng.gen_range(0.0..0.4);
            acc = &acc + &random_psd(rng, d, s);
            vals.push(acc.clone());
        }
        Control::make_feasible(&vals)
    }

    #[test]
    fn factor_round_trip() {
        let mut rng = stream(1, "factors", 0);
        for d in 1..=3 {
            let p = random_control(&mut rng, 4, d);
            let x = factors_from_chain(p.values());
            let back = chain_from_factors(&x, d);
            for (a, b) in back.iter().zip(p.values()) {
                assert!(a.dist(b) < 1e-12, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn chain_gradient_matches_differences() {
        let mut rng = stream(2, "chain_grad", 0);
        let d = 2;
        let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<SymMatrix> = (0..3).map(|_| crate::rng::random_sym(&mut rng, d, 1.0)).collect();
        let f = |x: &[f64]| -> f64 { chain_from_factors(x, d).iter().zip(&g).map(|(q, g)| q.dot(g)).sum() };
        let an = chain_gradient(&x, d, &g);
        for i in 0..x.len() {
            let h = 1e-6;
            let mut a = x.clone();
            a[i] += h;
            let mut b = x.clone();
            b[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - an[i]).abs() < 1e-7, "{i}: {fd} vs {}", an[i]);
        }
    }

    #[test]
    fn control_validation() {
        assert!(Control::new(vec![SymMatrix::scalar(0.5), SymMatrix::scalar(0.2)]).is_err());
        assert!(Control::new(vec![SymMatrix::scalar(1.5)]).is_err());
        assert!(Control::new(vec![SymMatrix::scalar(-0.1)]).is_err());
        let p = Control::new(vec![SymMatrix::scalar(0.1), SymMatrix::scalar(0.9)]).unwrap();
        assert!((p.l2_norm() - ((0.01 + 0.81) / 2.0f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parisi_functional_trivial_cases() {
        let q = StepPath::new(vec![0.5], vec![SymMatrix::scalar(0.2), SymMatrix::scalar(0.6)]).unwrap();
        let model = XiModel::sk(1.0);
        let law = SpinLaw::ising();
        let cfg = VariationalConfig {
            k: 2,
            ..VariationalConfig::default()
        };
        let psi = psi_grid(&q, &law, &cfg.grid).unwrap();
        let p = Control::new(vec![SymMatrix::scalar(0.3), SymMatrix::scalar(0.7)]).unwrap();
        let at0 = Problem::new(0.0, &q, &model, &law, &cfg).unwrap();
        assert!((at0.parisi_functional(&p).unwrap() - psi).abs() < 1e-12);
        let pr = Problem::new(0.7, &q, &model, &law, &cfg).unwrap();
        assert!((pr.parisi_functional(&Control::zero(2, 1)).unwrap() - psi).abs() < 1e-12);
    }

    #[test]
    fn one_atom_sk_control_is_stationary_at_scan_maximum() {
        // q ≡ 0, ξ = x², K = 1: value(m) = ψ(2tm) − t m²
        let cfg = VariationalConfig {
            k: 1,
            refine: 1,
            ..VariationalConfig::default()
        };
        let t = 1.5;
        let pr = Problem::new(t, &StepPath::zero(1), &XiModel::sk(1.0), &SpinLaw::ising(), &cfg).unwrap();
        let value = |m: f64| pr.parisi_functional(&Control::new(vec![SymMatrix::scalar(m)]).unwrap()).unwrap();
        let direct = |m: f64| {
            let q = StepPath::constant(SymMatrix::scalar(2.0 * t * m)).unwrap();
            psi_grid(&q, &SpinLaw::ising(), &cfg.grid).unwrap() - t * m * m
        };
        assert!((value(0.37) - direct(0.37)).abs() < 1e-12);
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for i in 0..=1000 {
            let m = i as f64 / 1000.0;
            let v = value(m);
            if v > best {
                best = v;
                arg = m;
            }
        }
        assert!(arg > 0.0 && arg < 1.0, "interior optimum expected, got {arg}");
        let h = 1e-4;
        let slope = (value(arg + h) - value(arg - h)) / (2.0 * h);
        // the scan resolution bounds |slope| by |value''|·1e-3
        let curv = (value(arg + 1e-2) - 2.0 * value(arg) + value(arg - 1e-2)) / 1e-4;
        assert!(slope.abs() <= curv.abs() * 1e-3 + 1e-8, "slope {slope}, curvature {curv}");
    }

    #[test]
    fn hopflax_and_parisi_agree_pathwise() {
        let mut rng = stream(3, "pathwise", 0);
        let q = RampStepPath::ramp(1, 0.2).unwrap();
        let pr = Problem::new(0.8, &q, &XiModel::sk(0.7), &SpinLaw::ising(), &VariationalConfig::default()).unwrap();
        for _ in 0..3 {
            let p = random_control(&mut rng, 4, 1);
            let a = pr.parisi_functional(&p).unwrap();
            let b = pr.hopflax_functional(&pr.shifted(&p).unwrap()).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let psi = pr.psi_cells(pr.q_cells().to_vec()).unwrap();
        assert!((pr.hopflax_functional(pr.q_cells()).unwrap() - psi).abs() < 1e-9);
    }

    #[test]
    fn two_dimensional_pathwise_identity() {
        let mut rng = stream(4, "pathwise2", 0);
        let model = XiModel::frobenius_square(2, 0.5).unwrap();
        let q = StepPath::new(vec![0.5], vec![SymMatrix::diag(&[0.1, 0.05]), SymMatrix::diag(&[0.3, 0.2])]).unwrap();
        let cfg = VariationalConfig {
            k: 2,
            refine: 1,
            grid: PsiGridConfig::coarse(),
            ..VariationalConfig::default()
        };
        let pr = Problem::new(1.0, &q, &model, &SpinLaw::square_corners(), &cfg).unwrap();
        let p = random_control(&mut rng, 2, 2);
        let a = pr.parisi_functional(&p).unwrap();
        let b = pr.hopflax_functional(&pr.shifted(&p).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn j_functional_examples() {
        let pr = sk_problem(0.5, 0.1, 0.5);
        let psi = pr.psi_cells(pr.q_cells().to_vec()).unwrap();
        let zero = Control::zero(4, 1);
        assert!((pr.j_functional(pr.q_cells(), &zero).unwrap() - psi).abs() < 1e-12);
        // at q' = q + t∇ξ(p): J = ψ(q') − t∫θ(p)
        let p = Control::new((1..=4).map(|i| SymMatrix::scalar(0.2 * i as f64)).collect()).unwrap();
        let qp = pr.shifted(&p).unwrap();
        let a = pr.j_functional(&qp, &p).unwrap();
        let b = pr.parisi_functional(&p).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn j_inner_product_matches_riemann_sum() {
        let pr = sk_problem(0.5, 0.3, 0.5);
        let p = Control::new((1..=4).map(|i| SymMatrix::scalar(0.1 * i as f64)).collect()).unwrap();
        let qp: Vec<SymMatrix> = pr.q_cells().iter().map(|v| v.scale(1.7)).collect();
        let psi = pr.psi_cells(qp.clone()).unwrap();
        let xi = p.integral(|v| pr.model().eval(v)).unwrap();
        let inner = pr.j_functional(&qp, &p).unwrap() - psi - pr.t() * xi;
        // midpoint sums are exact on cellwise-constant integrands
        let n = 160_000;
        let mut s = 0.0;
        let path_p = p.to_path();
        let path_q = pr.q_path();
        let path_qp = pr.path(qp).unwrap();
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            s += path_p.value(u).dot(&(&path_q.value(u) - &path_qp.value(u))) / n as f64;
        }
        assert!((inner - s).abs() < 1e-10, "{inner} vs {s}");
    }

    #[test]
    fn problem_rejects_bad_grids() {
        let q = StepPath::zero(1);
        let m = XiModel::sk(1.0);
        let law = SpinLaw::ising();
        let cfg = VariationalConfig::default();
        assert!(Problem::on_grid(1.0, &q, &[0.0, 0.3, 1.0], &m, &law, &cfg).is_err());
        assert!(Problem::new(-1.0, &q, &m, &law, &cfg).is_err());
        assert!(Problem::new(1.0, &q, &m, &SpinLaw::square_corners(), &cfg).is_err());
    }
}
