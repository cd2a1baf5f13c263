//! Numerical probes of uniqueness of the maximizer and of the first-order
//! behaviour of the value function `f̂(t, q)` in `q` and `t`.

use std::fmt;

use rand::Rng;
use serde::{Serialize, Serializer};

use super::solve::parisi_solve_from;
use super::{Control, Problem, VariationalConfig, VariationalReport};
use crate::cascade::SpinLaw;
use crate::cone::XiModel;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::path::{
    merged_grid, perturb_and_check, sort_dedup, uparrow_certificate, Certificate, LipschitzPath, MatrixPath,
    PerturbCheck, Perturbed, RampStepPath,
};
use crate::rng::{random_psd, random_sym, stream};

/// Verdict of a probe; serialized as a single line such as `"passed"`.
#[derive(Clone, Debug, PartialEq)]
pub enum Assertion {
    Passed,
    Failed(String),
    Skipped(String),
}

impl Assertion {
    fn check(ok: bool, detail: impl FnOnce() -> String) -> Self {
        if ok {
            Assertion::Passed
        } else {
            Assertion::Failed(detail())
        }
    }

    pub fn not_certified() -> Self {
        Assertion::Skipped("q not in Q_uparrow".into())
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Assertion::Failed(_))
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::Passed => write!(f, "passed"),
            Assertion::Failed(d) => write!(f, "failed: {d}"),
            Assertion::Skipped(d) => write!(f, "skipped ({d})"),
        }
    }
}

impl Serialize for Assertion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A problem instance before discretization.
#[derive(Clone, Debug)]
pub struct Instance {
    pub t: f64,
    pub q: RampStepPath,
    pub model: XiModel,
    pub law: SpinLaw,
    pub cfg: VariationalConfig,
}

impl Instance {
    pub fn problem(&self) -> Result<Problem> {
        Problem::new(self.t, &self.q, &self.model, &self.law, &self.cfg)
    }

    fn grid_with(&self, kappa: &LipschitzPath) -> Vec<f64> {
        let mut knots = self.q.knots();
        knots.extend(kappa.knots());
        sort_dedup(&mut knots);
        merged_grid(self.cfg.k * self.cfg.refine, &knots)
    }

    fn perturbed(&self, t: f64, kappa: &LipschitzPath, eps: f64, edges: &[f64]) -> Result<Problem> {
        let path = Perturbed {
            base: &self.q,
            direction: kappa,
            eps,
        };
        Problem::on_grid(t, &path, edges, &self.model, &self.law, &self.cfg)
    }

    fn certified(&self) -> bool {
        self.t > 0.0 && uparrow_certificate(&self.q).constant().is_some()
    }
}

/// `f̂` from a single warm start.
fn warm_value(pr: &Problem, p: &Control) -> Result<f64> {
    Ok(parisi_solve_from(pr, vec![("warm".to_string(), p.clone())])?.value)
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub t: f64,
    pub certificate: Certificate,
    pub value: f64,
    pub p_star: crate::path::StepPath,
    pub p_norm: f64,
    pub cluster_diameter: f64,
    pub cluster_size: usize,
    pub value_spread: f64,
    pub diameter_bound: f64,
    pub assertion: Assertion,
    pub solve: VariationalReport,
    #[serde(skip)]
    pub control: Control,
}

/// Multistart Parisi solve with at least 20 starts. For `q` with an
/// ellipticity certificate and `t > 0` the finishers within the value
/// tolerance must lie within `1e-3·(1 + |p*|_{L²})` of each other and all
/// finishers within `1e-4` in value; otherwise the cluster is only reported.
pub fn uniqueness_probe(inst: &Instance) -> Result<UniquenessReport> {
    if inst.cfg.n_starts < 20 {
        return Err(Error::Config(format!("the uniqueness probe needs ≥ 20 starts, got {}", inst.cfg.n_starts)));
    }
    let solve = super::parisi_solve(&inst.problem()?)?;
    let control = solve.control()?;
    let p_norm = control.l2_norm();
    let diameter_bound = 1e-3 * (1.0 + p_norm);
    let assertion = if inst.certified() {
        Assertion::check(solve.cluster_diameter <= diameter_bound && solve.value_spread <= 1e-4, || {
            format!(
                "cluster diameter {:e} (bound {diameter_bound:e}), value spread {:e}",
                solve.cluster_diameter, solve.value_spread
            )
        })
    } else {
        Assertion::not_certified()
    };
    Ok(UniquenessReport {
        t: inst.t,
        certificate: uparrow_certificate(&inst.q),
        value: solve.value,
        p_star: control.to_path(),
        p_norm,
        cluster_diameter: solve.cluster_diameter,
        cluster_size: solve.cluster_size,
        value_spread: solve.value_spread,
        diameter_bound,
        assertion,
        solve,
        control,
    })
}

/// A random Lipschitz direction with `κ(0) = 0` sampled at `i/n`; increments
/// are PSD when `nondecreasing`, symmetric otherwise, with entries of order `1/n`.
pub fn random_direction(seed: u64, index: u64, dim: usize, n: usize, nondecreasing: bool) -> Result<LipschitzPath> {
    let mut rng = stream(seed, if nondecreasing { "monotone_direction" } else { "direction" }, index);
    let mut acc = SymMatrix::zeros(dim);
    let mut vals = vec![acc.clone()];
    for _ in 0..n {
        let s: f64 = rng.gen_range(0.2..1.0);
        let inc = if nondecreasing {
            random_psd(&mut rng, dim, s)
        } else {
            random_sym(&mut rng, dim, s)
        };
        acc = &acc + &inc.scale(1.0 / n as f64);
        vals.push(acc.clone());
    }
    LipschitzPath::from_samples(dim, vals)
}

#[derive(Clone, Debug, Serialize)]
pub struct GateauxReport {
    pub eps: Vec<f64>,
    pub quotients: Vec<f64>,
    /// `2D(ε/2) − D(ε)` from the two smallest steps.
    pub derivative: f64,
    /// `⟨p*, κ⟩_{L²}`.
    pub envelope: f64,
    pub error: f64,
    pub tolerance: f64,
    pub feasibility: Vec<PerturbCheck>,
    pub assertion: Assertion,
}

/// One-sided quotients `(f̂(q + εκ) − f̂(q))/ε` over a decreasing schedule,
/// all on one grid containing the knots of `q` and `κ`, each solve warm
/// started from `p*`.
pub fn gateaux_fd(inst: &Instance, base: &UniquenessReport, kappa: &LipschitzPath, eps: &[f64]) -> Result<GateauxReport> {
    if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("the step schedule must hold at least two decreasing positive steps".into()));
    }
    let feasibility: Vec<PerturbCheck> = eps.iter().map(|&e| perturb_and_check(&inst.q, kappa, e)).collect();
    let edges = inst.grid_with(kappa);
    let mut probs = vec![inst.perturbed(inst.t, kappa, 0.0, &edges)?];
    for &e in eps {
        probs.push(inst.perturbed(inst.t, kappa, e, &edges).map_err(|err| {
            Error::Infeasible(format!("q + {e}·κ leaves the path class: {err}"))
        })?);
    }
    let values = probs.iter().map(|pr| warm_value(pr, &base.control)).collect::<Result<Vec<f64>>>()?;
    let quotients: Vec<f64> = eps.iter().zip(&values[1..]).map(|(e, f)| (f - values[0]) / e).collect();
    let n = quotients.len();
    let ratio = eps[n - 2] / eps[n - 1];
    // first-order error: (r D(ε/r) − D(ε)) / (r − 1)
    let derivative = (ratio * quotients[n - 1] - quotients[n - 2]) / (ratio - 1.0);
    let envelope = kappa.inner_step(&base.p_star);
    let error = (derivative - envelope).abs();
    let tolerance = 1e-2 * (1.0 + envelope.abs());
    let assertion = if !inst.certified() {
        Assertion::not_certified()
    } else if !feasibility.iter().all(|c| c.member) {
        Assertion::Skipped("perturbation leaves Q_uparrow".into())
    } else {
        Assertion::check(error <= tolerance, || format!("|D − ⟨p*, κ⟩| = {error:e} > {tolerance:e}"))
    };
    Ok(GateauxReport {
        eps: eps.to_vec(),
        quotients,
        derivative,
        envelope,
        error,
        tolerance,
        feasibility,
        assertion,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PdeReport {
    pub dt: f64,
    pub f_minus: f64,
    pub f_plus: f64,
    /// Central difference of `f̂` in `t`.
    pub dt_f: f64,
    /// `∫ ξ(p*)`.
    pub xi_integral: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub p_nondecreasing: bool,
    pub p_bounded: bool,
    pub assertion: Assertion,
}

/// `|∂_t f̂ − ∫ξ(p*)|` with the time derivative by central differences.
pub fn pde_residual(inst: &Instance, base: &UniquenessReport, dt: f64) -> Result<PdeReport> {
    if !(dt > 0.0 && inst.t - dt > 0.0) {
        return Err(Error::OutOfRange(format!("need 0 < δt < t, got δt = {dt}, t = {}", inst.t)));
    }
    let pr = inst.problem()?;
    let f_minus = warm_value(&pr.at_time(inst.t - dt)?, &base.control)?;
    let f_plus = warm_value(&pr.at_time(inst.t + dt)?, &base.control)?;
    let dt_f = (f_plus - f_minus) / (2.0 * dt);
    let xi_integral = base.control.integral(|v| inst.model.eval(v))?;
    let residual = (dt_f - xi_integral).abs();
    let tolerance = 1e-2 * (1.0 + dt_f.abs());
    let vals = base.control.values();
    let p_nondecreasing = vals[0].is_psd() && vals.windows(2).all(|w| (&w[1] - &w[0]).is_psd());
    let p_bounded = vals.iter().all(|v| v.norm() <= 1.0 + 1e-9);
    let assertion = if inst.certified() {
        Assertion::check(residual <= tolerance && p_nondecreasing && p_bounded, || {
            format!("residual {residual:e} (bound {tolerance:e}), nondecreasing {p_nondecreasing}, bounded {p_bounded}")
        })
    } else {
        Assertion::not_certified()
    };
    Ok(PdeReport {
        dt,
        f_minus,
        f_plus,
        dt_f,
        xi_integral,
        residual,
        tolerance,
        p_nondecreasing,
        p_bounded,
        assertion,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FrechetRow {
    pub direction: usize,
    pub level: u32,
    /// `|q_n − q|_{L²}`.
    pub displacement: f64,
    pub remainder: f64,
    /// Same with `t` moved by the displacement as well; informational.
    pub joint_remainder: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrechetReport {
    pub rows: Vec<FrechetRow>,
    pub threshold: f64,
    pub assertion: Assertion,
}

const FRECHET_THRESHOLD: f64 = 5e-2;
const FRECHET_SLACK: f64 = 1e-3;

/// Relative first-order remainders `|f̂(q_n) − f̂(q) − ⟨p*, q_n − q⟩| / |q_n − q|`
/// along random nondecreasing directions scaled to `|q_n − q|_{L²} = 2^{−j}`,
/// `j = 1..=levels`. Each direction must decrease, up to a small slack, until
/// it drops below `5e-2`.
pub fn frechet_probe(inst: &Instance, base: &UniquenessReport, n_directions: usize, levels: u32) -> Result<FrechetReport> {
    if n_directions == 0 || levels == 0 {
        return Err(Error::Config("need at least one direction and one level".into()));
    }
    let d = inst.model.dim();
    let n = inst.cfg.k * inst.cfg.refine;
    let xi_integral = base.control.integral(|v| inst.model.eval(v))?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for i in 0..n_directions {
        let kappa = random_direction(inst.cfg.seed, i as u64, d, n, true)?;
        let edges = inst.grid_with(&kappa);
        let pr0 = inst.perturbed(inst.t, &kappa, 0.0, &edges)?;
        let unit = inst.perturbed(inst.t, &kappa, 1.0, &edges)?;
        let scale = pr0.cell_distance(unit.q_cells(), pr0.q_cells());
        if !(scale > 0.0) {
            return Err(Error::Infeasible("zero displacement".into()));
        }
        let f0 = warm_value(&pr0, &base.control)?;
        let p_cells = pr0.control_cells(&base.control)?;
        let lens: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let mut rs = Vec::new();
        for j in 1..=levels {
            let h = 0.5f64.powi(j as i32);
            let eps = h / scale;
            let pr = inst.perturbed(inst.t, &kappa, eps, &edges)?;
            let dq: Vec<SymMatrix> = pr.q_cells().iter().zip(pr0.q_cells()).map(|(a, b)| a - b).collect();
            let displacement = pr0.cell_distance(pr.q_cells(), pr0.q_cells());
            let linear: f64 = p_cells.iter().zip(&dq).zip(&lens).map(|((p, v), l)| l * p.dot(v)).sum();
            let f = warm_value(&pr, &base.control)?;
            let remainder = (f - f0 - linear).abs() / displacement;
            let joint = warm_value(&pr.at_time(inst.t + displacement)?, &base.control)?;
            let joint_remainder = (joint - f0 - linear - displacement * xi_integral).abs() / (2.0 * displacement);
            rs.push(remainder);
            rows.push(FrechetRow {
                direction: i,
                level: j,
                displacement,
                remainder,
                joint_remainder,
            });
        }
        match rs.iter().position(|&r| r < FRECHET_THRESHOLD) {
            None => failures.push(format!("direction {i}: remainder never below {FRECHET_THRESHOLD}")),
            Some(stop) => {
                if rs[..=stop].windows(2).any(|w| w[1] > w[0] + FRECHET_SLACK) {
                    failures.push(format!("direction {i}: remainders not decreasing {:?}", &rs[..=stop]));
                }
            }
        }
    }
    let assertion = if !inst.certified() {
        Assertion::not_certified()
    } else {
        Assertion::check(failures.is_empty(), || failures.join("; "))
    };
    Ok(FrechetReport {
        rows,
        threshold: FRECHET_THRESHOLD,
        assertion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(t: f64, c: f64) -> Instance {
        Instance {
            t,
            q: RampStepPath::ramp(1, c).unwrap(),
            model: XiModel::sk(0.5),
            law: SpinLaw::ising(),
            cfg: VariationalConfig::default(),
        }
    }

    #[test]
    fn assertion_strings() {
        assert_eq!(Assertion::not_certified().to_string(), "skipped (q not in Q_uparrow)");
        assert_eq!(serde_json::to_string(&Assertion::Passed).unwrap(), "\"passed\"");
        assert!(Assertion::Failed("x".into()).is_failure());
    }

    #[test]
    fn zero_path_is_reported_without_assertion() {
        let r = uniqueness_probe(&instance(1.0, 0.0)).unwrap();
        assert_eq!(r.assertion, Assertion::not_certified());
    }

    #[test]
    fn certified_ramp_has_a_single_cluster() {
        let inst = instance(1.0, 0.2);
        let r = uniqueness_probe(&inst).unwrap();
        assert_eq!(r.assertion, Assertion::Passed, "{r:?}");
        assert!(r.cluster_diameter <= 1e-3);
    }

    #[test]
    fn gateaux_along_zero_direction_is_zero_and_matches_envelope() {
        let inst = instance(1.0, 0.2);
        let base = uniqueness_probe(&inst).unwrap();
        let zero = LipschitzPath::zero(1, 16);
        let g = gateaux_fd(&inst, &base, &zero, &[0.02, 0.01]).unwrap();
        assert_eq!(g.derivative, 0.0);
        let kappa = random_direction(3, 0, 1, 16, false).unwrap();
        let g = gateaux_fd(&inst, &base, &kappa, &[0.02, 0.01]).unwrap();
        assert_eq!(g.assertion, Assertion::Passed, "{g:?}");
    }

    #[test]
    fn hamilton_jacobi_residual_is_small() {
        let inst = instance(1.0, 0.2);
        let base = uniqueness_probe(&inst).unwrap();
        let r = pde_residual(&inst, &base, 0.05).unwrap();
        assert_eq!(r.assertion, Assertion::Passed, "{r:?}");
    }

    #[test]
    fn frechet_remainders_decrease() {
        let inst = instance(1.0, 0.2);
        let base = uniqueness_probe(&inst).unwrap();
        let r = frechet_probe(&inst, &base, 2, 5).unwrap();
        assert_eq!(r.assertion, Assertion::Passed, "{r:?}");
    }

    #[test]
    fn rejects_few_starts_and_bad_schedules() {
        let mut inst = instance(1.0, 0.2);
        inst.cfg.n_starts = 5;
        assert!(uniqueness_probe(&inst).is_err());
    }
}
