//! Finite-difference gradient of `ψ` with respect to the segment values of a step path.

use super::{psi_grid, PsiGridConfig, SpinLaw};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::path::StepPath;

/// Rank-one probes `v vᵀ`: `e_i` for the diagonal, `e_i ± e_j` for the rest.
fn probes(d: usize) -> Vec<(usize, usize, SymMatrix)> {
    let mut out = Vec::new();
    for i in 0..d {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        out.push((i, i, SymMatrix::outer(&v)));
        for j in i + 1..d {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                v[j] = s;
                out.push((i, j, SymMatrix::outer(&v)));
            }
        }
    }
    out
}

fn shifted(breaks: &[f64], values: &[SymMatrix], from: usize, to: usize, dir: &SymMatrix, eps: f64) -> Result<StepPath> {
    let values = values
        .iter()
        .enumerate()
        .map(|(k, v)| if k >= from && k < to { v + &dir.scale(eps) } else { v.clone() })
        .collect();
    StepPath::new(breaks.to_vec(), values)
}

/// Densities `G_k` of the `L²` gradient of `ψ`, one per segment of `q`.
///
/// Each value `q_k` is moved by `±ε v vᵀ` when both moves keep the path
/// nondecreasing. Otherwise the whole tail `q_k, ..., q_K` is raised by `ε v vᵀ`
/// and `2ε v vᵀ`, the one-sided second-order quotient gives the tail derivative,
/// and consecutive tails are differenced.
pub fn grad_psi_fd(q: &StepPath, law: &SpinLaw, cfg: &PsiGridConfig, eps: f64) -> Result<Vec<SymMatrix>> {
    grad_psi_cells(q.breakpoints(), q.values(), law, cfg, eps)
}

/// As [`grad_psi_fd`] for a path given cell by cell; equal neighbouring
/// values are kept as separate cells, each with its own density.
pub(crate) fn grad_psi_cells(
    breaks: &[f64],
    values: &[SymMatrix],
    law: &SpinLaw,
    cfg: &PsiGridConfig,
    eps: f64,
) -> Result<Vec<SymMatrix>> {
    if !(1e-5..=1e-2).contains(&eps) {
        return Err(Error::OutOfRange(format!("finite-difference step {eps} outside [1e-5, 1e-2]")));
    }
    let q = StepPath::new(breaks.to_vec(), values.to_vec())?;
    let d = law.dim();
    let n = values.len();
    let mut edges = vec![0.0];
    edges.extend_from_slice(breaks);
    edges.push(1.0);
    let lens: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let psi = |p: &StepPath| psi_grid(p, law, cfg);
    let probes = probes(d);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(probes.len());
    let mut f0 = None;
    for (_, _, v) in &probes {
        let central: Option<Vec<(StepPath, StepPath)>> = (0..n)
            .map(|k| Some((shifted(breaks, values, k, k + 1, v, eps).ok()?, shifted(breaks, values, k, k + 1, v, -eps).ok()?)))
            .collect();
        let dir = match central {
            Some(pairs) => pairs
                .iter()
                .zip(&lens)
                .map(|((a, b), len)| Ok((psi(a)? - psi(b)?) / (2.0 * eps * len)))
                .collect::<Result<Vec<f64>>>()?,
            None => {
                let base = match f0 {
                    Some(v) => v,
                    None => {
                        let v = psi(&q)?;
                        f0 = Some(v);
                        v
                    }
                };
                let mut tails = vec![0.0; n + 1];
                for k in 0..n {
                    let a = psi(&shifted(breaks, values, k, n, v, eps)?)?;
                    let b = psi(&shifted(breaks, values, k, n, v, 2.0 * eps)?)?;
                    tails[k] = (-3.0 * base + 4.0 * a - b) / (2.0 * eps);
                }
                (0..n).map(|k| (tails[k] - tails[k + 1]) / lens[k]).collect()
            }
        };
        dirs.push(dir);
    }
    Ok((0..n)
        .map(|k| {
            let mut g = nalgebra::DMatrix::zeros(d, d);
            let mut idx = 0;
            while idx < probes.len() {
                let (i, j, _) = probes[idx];
                if i == j {
                    g[(i, i)] = dirs[idx][k];
                    idx += 1;
                } else {
                    let (plus, minus) = (dirs[idx][k], dirs[idx + 1][k]);
                    g[(i, j)] = (plus - minus) / 4.0;
                    g[(j, i)] = g[(i, j)];
                    idx += 2;
                }
            }
            SymMatrix::from_matrix(g).expect("finite")
        })
        .collect())
}
