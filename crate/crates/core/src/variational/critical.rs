//! Damped fixed-point iteration for `q' = q + t∇ξ(p)`, `p = ∇ψ(q')`.

use serde::{Deserialize, Serialize};

use super::{Control, Problem};
use crate::cascade::grad_psi_cells;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::path::StepPath;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalOptions {
    /// Weight `λ ∈ (0, 1]` of the new iterate.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step for `∇ψ`.
    pub fd_eps: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-6,
            max_iter: 200,
            fd_eps: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub q_prime: StepPath,
    pub q_prime_cells: Vec<SymMatrix>,
    pub p: StepPath,
    #[serde(skip)]
    pub control: Control,
    /// `|q' − q − t∇ξ(p)|_{L²}`.
    pub relation_residual: f64,
    /// `|p − ∇ψ(q')|_{L²}` with `∇ψ` averaged over the control segments.
    pub gradient_residual: f64,
    pub j_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient residual before each update.
    pub history: Vec<f64>,
}

fn distance(a: &[SymMatrix], b: &[SymMatrix]) -> f64 {
    let k = a.len() as f64;
    a.iter().zip(b).map(|(a, b)| a.dist(b).powi(2) / k).sum::<f64>().sqrt()
}

/// Starts from the segment averages of `∇ψ(q)`, the solution at `t = 0`.
/// On `max_iter` the iterate with the smallest residual is returned, flagged
/// through `converged = false`.
pub fn critical_point_solve(pr: &Problem, opts: &CriticalOptions) -> Result<CriticalPoint> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Config(format!("damping {} outside (0, 1]", opts.damping)));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Config("tol and max_iter must be positive".into()));
    }
    if !(pr.t() > 0.0) {
        return Err(Error::OutOfRange("the critical-point system needs t > 0".into()));
    }
    let edges = pr.edges();
    let inner = &edges[1..edges.len() - 1];
    let target = |cells: &[SymMatrix]| -> Result<Vec<SymMatrix>> {
        let g = grad_psi_cells(inner, cells, pr.law(), &pr.config().grid, opts.fd_eps)?;
        Ok(Control::make_feasible(&pr.block_average(&g)).values().to_vec())
    };
    let mut p = Control::new(target(pr.q_cells())?)?;
    let mut history = Vec::new();
    let mut best: Option<(f64, Control)> = None;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let next = target(&pr.shifted(&p)?)?;
        let r = distance(p.values(), &next);
        history.push(r);
        if best.as_ref().map_or(true, |(b, _)| r < *b) {
            best = Some((r, p.clone()));
        }
        if r <= opts.tol {
            converged = true;
            break;
        }
        let mixed: Vec<SymMatrix> = p
            .values()
            .iter()
            .zip(&next)
            .map(|(a, b)| &a.scale(1.0 - opts.damping) + &b.scale(opts.damping))
            .collect();
        p = Control::make_feasible(&mixed);
    }
    let (gradient_residual, p) = if converged {
        (*history.last().expect("nonempty"), p)
    } else {
        best.expect("at least one iteration")
    };
    let q_prime_cells = pr.shifted(&p)?;
    let grads: Vec<SymMatrix> = p.values().iter().map(|v| pr.model().grad(v)).collect::<Result<_>>()?;
    let implied: Vec<SymMatrix> = pr
        .q_cells()
        .iter()
        .zip(pr.control_cells(&Control::from_chain(grads))?)
        .map(|(q, g)| q + &g.scale(pr.t()))
        .collect();
    let relation_residual = pr.cell_distance(&q_prime_cells, &implied);
    let j_value = pr.j_functional(&q_prime_cells, &p)?;
    Ok(CriticalPoint {
        q_prime: pr.path(q_prime_cells.clone())?,
        q_prime_cells,
        p: p.to_path(),
        control: p,
        relation_residual,
        gradient_residual,
        j_value,
        iterations: history.len(),
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::SpinLaw;
    use crate::cone::XiModel;
    use crate::path::RampStepPath;
    use crate::variational::{parisi_solve, VariationalConfig};

    fn problem(t: f64, c: f64, beta: f64) -> Problem {
        let q = RampStepPath::ramp(1, c).unwrap();
        let cfg = VariationalConfig {
            n_starts: 4,
            ..VariationalConfig::default()
        };
        Problem::new(t, &q, &XiModel::sk(beta), &SpinLaw::ising(), &cfg).unwrap()
    }

    #[test]
    fn high_temperature_ramp_converges() {
        let pr = problem(1.0, 0.1, 0.2);
        let cp = critical_point_solve(&pr, &CriticalOptions::default()).unwrap();
        assert!(cp.converged && cp.iterations < 200, "{} iterations", cp.iterations);
        assert!(cp.gradient_residual <= 1e-6 && cp.relation_residual <= 1e-6);
    }

    #[test]
    fn j_at_the_critical_point_is_the_parisi_value() {
        let pr = problem(1.0, 0.2, 0.5);
        let cp = critical_point_solve(&pr, &CriticalOptions::default()).unwrap();
        assert!(cp.converged);
        let f = parisi_solve(&pr).unwrap().value;
        assert!((cp.j_value - f).abs() <= 1e-3 * (1.0 + f.abs()), "{} vs {f}", cp.j_value);
        let direct = pr.parisi_functional(&cp.control).unwrap();
        assert!((cp.j_value - direct).abs() <= 1e-10);
    }

    #[test]
    fn small_time_fixed_point_is_the_gradient_of_psi() {
        let pr = problem(1e-6, 0.2, 0.5);
        let cp = critical_point_solve(&pr, &CriticalOptions::default()).unwrap();
        let edges = pr.edges();
        let g = grad_psi_cells(&edges[1..edges.len() - 1], pr.q_cells(), pr.law(), &pr.config().grid, 1e-4).unwrap();
        let at_q = pr.block_average(&g);
        assert!(distance(cp.control.values(), &at_q) < 1e-5);
        assert!(pr.cell_distance(&cp.q_prime_cells, pr.q_cells()) < 1e-5);
    }

    #[test]
    fn rejects_bad_damping() {
        let pr = problem(1.0, 0.1, 0.2);
        let opts = CriticalOptions {
            damping: 0.0,
            ..CriticalOptions::default()
        };
        assert!(critical_point_solve(&pr, &opts).is_err());
    }
}
