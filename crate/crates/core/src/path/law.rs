//! The law map `q ↦ law(q(U))` and its inverse on the line.

use super::StepPath;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::measure::DiscreteMeasure;

/// Atoms `q_k` with weights `ζ_{k+1} − ζ_k`.
pub fn law_map(path: &StepPath) -> DiscreteMeasure<SymMatrix> {
    let (atoms, weights) = path
        .segments()
        .map(|(lo, hi, v)| (v.clone(), hi - lo))
        .unzip();
    DiscreteMeasure::new(atoms, weights).expect("segment lengths sum to one")
}

/// Quantile function of a measure on `ℝ_+`, as a `1×1` step path.
pub fn quantile_path(mu: &DiscreteMeasure<f64>) -> Result<StepPath> {
    if mu.atoms().iter().any(|&a| !(a >= 0.0)) {
        return Err(Error::InvalidMeasure("quantile paths need atoms in [0, ∞)".into()));
    }
    let mut pairs: Vec<(f64, f64)> = mu.iter().map(|(&a, w)| (a, w)).filter(|p| p.1 > 0.0).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, w) in pairs {
        match merged.last_mut() {
            Some(last) if last.0 == a => last.1 += w,
            _ => merged.push((a, w)),
        }
    }
    let mut breakpoints = Vec::new();
    let mut acc = 0.0;
    for (_, w) in &merged[..merged.len() - 1] {
        acc += w;
        breakpoints.push(acc);
    }
    // cumulative round-off may push the last breakpoint onto 1
    if breakpoints.last().is_some_and(|&b| b >= 1.0) {
        return Err(Error::InvalidMeasure("degenerate weights at the top of the support".into()));
    }
    let values = merged.iter().map(|&(a, _)| SymMatrix::scalar(a)).collect();
    StepPath::new(breakpoints, values)
}

/// Scalar atoms of a `1×1` matrix measure.
pub fn scalar_law(mu: &DiscreteMeasure<SymMatrix>) -> Result<DiscreteMeasure<f64>> {
    let atoms = mu
        .atoms()
        .iter()
        .map(|a| {
            a.check_dim(1)?;
            Ok(a.get(0, 0))
        })
        .collect::<Result<Vec<f64>>>()?;
    DiscreteMeasure::new(atoms, mu.weights().to_vec())
}
