//! Multistart maximization of the Parisi and Hopf–Lax functionals.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::optimize::{fd_gradient, maximize, AscentOptions};
use super::{chain_from_factors, chain_gradient, factors_from_chain, project_chain, Control, Problem};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::path::StepPath;
use crate::rng::{random_psd, stream};

#[derive(Clone, Debug, Serialize)]
pub struct StartRecord {
    pub index: usize,
    pub label: String,
    pub start: StepPath,
    pub value: f64,
    pub path: StepPath,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step.
    pub trajectory: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalReport {
    pub value: f64,
    /// Maximizing control `p` (Parisi) or path `q'` (Hopf–Lax).
    pub optimizer: StepPath,
    /// The maximizer cell by cell: control segments for Parisi, grid cells for Hopf–Lax.
    pub cells: Vec<SymMatrix>,
    /// Sorted by decreasing value, ties by start index.
    pub starts: Vec<StartRecord>,
    /// Largest `L²` distance between finishers within the cluster tolerance of the best value.
    pub cluster_diameter: f64,
    pub cluster_size: usize,
    /// Best minus worst final value over all successful starts.
    pub value_spread: f64,
    pub residuals: BTreeMap<String, f64>,
    /// Set when no start converged.
    pub flagged: bool,
}

impl VariationalReport {
    /// The Parisi maximizer as a control.
    pub fn control(&self) -> Result<Control> {
        Control::new(self.cells.clone())
    }
}

fn ascent_options(pr: &Problem) -> AscentOptions {
    let c = pr.config();
    AscentOptions {
        max_iter: c.max_iter,
        value_tol: c.value_tol,
        grad_tol: c.grad_tol,
    }
}

/// Default starts: near-zero, an `Id`-scaled ramp, then random monotone chains.
pub(crate) fn default_starts(pr: &Problem, n: usize) -> Vec<(String, Control)> {
    let k = pr.config().k;
    let d = pr.dim();
    let id = SymMatrix::identity(d).scale(1.0 / (d as f64).sqrt());
    let mut out = Vec::with_capacity(n);
    // the factor parametrization has a saddle at exactly zero
    out.push((
        "zero".to_string(),
        Control::make_feasible(&(1..=k).map(|i| id.scale(1e-3 * i as f64)).collect::<Vec<_>>()),
    ));
    out.push((
        "ramp".to_string(),
        Control::make_feasible(&(1..=k).map(|i| id.scale(0.5 * i as f64 / k as f64)).collect::<Vec<_>>()),
    ));
    let mut i = 0;
    while out.len() < n {
        let mut rng = stream(pr.config().seed, "variational_starts", i);
        let top: f64 = rng.gen_range(0.05..1.0);
        let mut acc = SymMatrix::zeros(d);
        let mut vals = Vec::with_capacity(k);
        for _ in 0..k {
            let s: f64 = rng.gen_range(0.0..1.0);
            acc = &acc + &random_psd(&mut rng, d, s);
            vals.push(acc.clone());
        }
        let norm = acc.norm();
        let vals: Vec<SymMatrix> = if norm > 0.0 {
            vals.iter().map(|v| v.scale(top / norm)).collect()
        } else {
            vals
        };
        out.push((format!("random_{i}"), Control::make_feasible(&vals)));
        i += 1;
    }
    out.truncate(n);
    out
}

/// Maximizes `p ↦ ψ(q + t∇ξ∘p) − t∫θ(p)` from the default starts.
pub fn parisi_solve(pr: &Problem) -> Result<VariationalReport> {
    parisi_solve_with(pr, Vec::new())
}

/// As [`parisi_solve`] with extra labelled starts run before the default ones.
pub fn parisi_solve_with(pr: &Problem, extra: Vec<(String, Control)>) -> Result<VariationalReport> {
    let mut starts = extra;
    starts.extend(default_starts(pr, pr.config().n_starts));
    parisi_solve_from(pr, starts)
}

/// Runs exactly the given starts.
pub(crate) fn parisi_solve_from(pr: &Problem, starts: Vec<(String, Control)>) -> Result<VariationalReport> {
    let d = pr.dim();
    let opts = ascent_options(pr);
    let objective = |x: &[f64]| pr.parisi_functional(&Control::from_chain(chain_from_factors(x, d)));
    let fd = pr.config().fd_step;
    let grad = |x: &[f64]| fd_gradient(&objective, x, fd);
    let project = |x: &mut [f64]| project_chain(x, d, 1.0);
    let runs: Vec<(usize, String, Control, Result<(Control, super::optimize::Ascent)>)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, (label, start))| {
            let res = pr.control_cells(&start).and_then(|_| {
                let x0 = factors_from_chain(start.values());
                let a = maximize(&objective, &grad, &project, &x0, &opts)?;
                let p = Control::make_feasible(&chain_from_factors(&a.x, d));
                Ok((p, a))
            });
            (i, label, start, res)
        })
        .collect();
    let records: Vec<(StartRecord, Vec<SymMatrix>)> = runs
        .into_iter()
        .map(|(index, label, start, res)| match res {
            Ok((p, a)) => (
                StartRecord {
                    index,
                    label,
                    start: start.to_path(),
                    value: a.value,
                    path: p.to_path(),
                    iterations: a.iterations,
                    converged: a.converged,
                    trajectory: a.trajectory,
                    error: None,
                },
                p.values().to_vec(),
            ),
            Err(e) => (failed(index, label, start.to_path(), e), Vec::new()),
        })
        .collect();
    assemble(records, |a, b| {
        Control::new(a.to_vec())
            .and_then(|a| Ok(a.l2_distance(&Control::new(b.to_vec())?)))
            .unwrap_or(f64::INFINITY)
    }, |cells| Ok(Control::new(cells.to_vec())?.to_path()), pr.config().cluster_value_tol)
}

fn failed(index: usize, label: String, start: StepPath, e: Error) -> StartRecord {
    StartRecord {
        index,
        label,
        start: start.clone(),
        value: f64::NEG_INFINITY,
        path: start,
        iterations: 0,
        converged: false,
        trajectory: Vec::new(),
        error: Some(e.to_string()),
    }
}

fn assemble(
    records: Vec<(StartRecord, Vec<SymMatrix>)>,
    dist: impl Fn(&[SymMatrix], &[SymMatrix]) -> f64,
    to_path: impl Fn(&[SymMatrix]) -> Result<StepPath>,
    cluster_tol: f64,
) -> Result<VariationalReport> {
    let mut records = records;
    records.sort_by(|a, b| b.0.value.total_cmp(&a.0.value).then(a.0.index.cmp(&b.0.index)));
    let ok: Vec<&(StartRecord, Vec<SymMatrix>)> = records.iter().filter(|r| r.0.error.is_none()).collect();
    if ok.is_empty() {
        let msg = records
            .iter()
            .filter_map(|r| r.0.error.clone())
            .next()
            .unwrap_or_default();
        return Err(Error::Optimizer(format!("every start failed: {msg}")));
    }
    let best = ok[0];
    let worst = ok.last().expect("nonempty").0.value;
    let cluster: Vec<&&(StartRecord, Vec<SymMatrix>)> = ok
        .iter()
        .filter(|r| best.0.value - r.0.value <= cluster_tol)
        .collect();
    let mut diameter: f64 = 0.0;
    for (i, a) in cluster.iter().enumerate() {
        for b in &cluster[i + 1..] {
            diameter = diameter.max(dist(&a.1, &b.1));
        }
    }
    let mut residuals = BTreeMap::new();
    residuals.insert("best_iterations".to_string(), best.0.iterations as f64);
    Ok(VariationalReport {
        value: best.0.value,
        optimizer: to_path(&best.1)?,
        cells: best.1.clone(),
        cluster_diameter: diameter,
        cluster_size: cluster.len(),
        value_spread: best.0.value - worst,
        flagged: !ok.iter().any(|r| r.0.converged),
        residuals,
        starts: records.into_iter().map(|r| r.0).collect(),
    })
}

/// Maximizes `q' ↦ ψ(q') − t∫ξ*((q' − q)/t)` over nondecreasing `q'` on the
/// problem's cells with `|q'|_F` bounded by [`Problem::hopflax_radius`].
///
/// Starts are `q + t∇ξ∘p` for the default Parisi starts `p`. The `ψ` part of
/// the gradient is differenced; the transport part uses `∇ξ*` exactly.
pub fn hopflax_solve(pr: &Problem) -> Result<VariationalReport> {
    if !(pr.t() > 0.0) {
        return Err(Error::OutOfRange("Hopf–Lax needs t > 0".into()));
    }
    let d = pr.dim();
    let radius = pr.hopflax_radius();
    let opts = ascent_options(pr);
    let psi = |x: &[f64]| pr.psi_cells(chain_from_factors(x, d));
    let objective = |x: &[f64]| -> Result<f64> {
        let qp = chain_from_factors(x, d);
        let (cost, _) = pr.transport_cost(&qp)?;
        Ok(pr.psi_cells(qp)? - cost)
    };
    let fd = pr.config().fd_step;
    let lens: Vec<f64> = pr.edges().windows(2).map(|w| w[1] - w[0]).collect();
    let grad = |x: &[f64]| -> Result<Vec<f64>> {
        let mut g = fd_gradient(&psi, x, fd)?;
        let (_, argmax) = pr.transport_cost(&chain_from_factors(x, d))?;
        let dens: Vec<SymMatrix> = argmax.iter().zip(&lens).map(|(a, len)| a.scale(-len)).collect();
        for (gi, ci) in g.iter_mut().zip(chain_gradient(x, d, &dens)) {
            *gi += ci;
        }
        Ok(g)
    };
    let project = |x: &mut [f64]| project_chain(x, d, radius);
    let starts = default_starts(pr, pr.config().n_starts);
    let runs: Vec<(usize, String, Result<(Vec<SymMatrix>, Vec<SymMatrix>, super::optimize::Ascent)>)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, (label, p))| {
            let res = pr.shifted(&p).and_then(|start| {
                let x0 = factors_from_chain(&start);
                let a = maximize(&objective, &grad, &project, &x0, &opts)?;
                Ok((start, chain_from_factors(&a.x, d), a))
            });
            (i, label, res)
        })
        .collect();
    let records = runs
        .into_iter()
        .map(|(index, label, res)| match res {
            Ok((start, qp, a)) => Ok((
                StartRecord {
                    index,
                    label,
                    start: pr.path(start)?,
                    value: a.value,
                    path: pr.path(qp.clone())?,
                    iterations: a.iterations,
                    converged: a.converged,
                    trajectory: a.trajectory,
                    error: None,
                },
                qp,
            )),
            Err(e) => Ok((failed(index, label, pr.q_path(), e), Vec::new())),
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(records, |a, b| pr.cell_distance(a, b), |cells| pr.path(cells.to_vec()), pr.config().cluster_value_tol)
}
