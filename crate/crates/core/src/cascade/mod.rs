//! Poisson–Dirichlet cascades, the one-body functional `ψ` and the finite-`N`
//! enriched free energy.

mod grad;
mod grid;
mod mc;

pub use grad::grad_psi_fd;
pub(crate) use grad::grad_psi_cells;
pub use grid::{psi_grid, PsiGridConfig};
pub use mc::{
    mc_free_energy, overlap_samples, psi_mc, sample_cascade_weights, sample_field, CascadeDraw,
    McEstimate,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::StepPath;

/// Leaf budget `M^K` for simulated cascades.
pub const MAX_LEAVES: usize = 40_000;

/// Finitely supported reference law of one spin, supported in the unit ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinLaw {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SpinLaw {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(
                "spin law needs as many weights as atoms, at least one".into(),
            ));
        }
        let d = atoms[0].len();
        if d == 0 {
            return Err(Error::InvalidMeasure("spin atoms must have dimension ≥ 1".into()));
        }
        for a in &atoms {
            if a.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: a.len(),
                });
            }
            let n2: f64 = a.iter().map(|x| x * x).sum();
            if !n2.is_finite() || n2.sqrt() > 1.0 + 1e-12 {
                return Err(Error::InvalidMeasure(format!(
                    "spin atom {a:?} lies outside the closed unit ball"
                )));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("spin weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMeasure(format!("spin weights sum to {total}, not 1")));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { atoms, weights })
    }

    /// Uniform on `{−1, +1}`.
    pub fn ising() -> Self {
        Self::new(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).expect("valid")
    }

    /// Uniform on the corners `(±1, ±1)/√2` of the square inscribed in the unit disk.
    pub fn square_corners() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(
            vec![vec![-s, -s], vec![-s, s], vec![s, -s], vec![s, s]],
            vec![0.25; 4],
        )
        .expect("valid")
    }

    /// Default law per dimension: Ising for `D = 1`, square corners for `D = 2`.
    pub fn default_for(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self::ising()),
            2 => Ok(Self::square_corners()),
            _ => Err(Error::InvalidMeasure(format!("no default spin law for D = {dim}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `E σ` under the law.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for k in 0..d {
                m[k] += w * a[k];
            }
        }
        m
    }
}

/// Tree depth, levels `ζ_1 < ... < ζ_K` and per-node truncation `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSpec {
    pub zetas: Vec<f64>,
    pub m: usize,
    pub seed: u64,
}

impl CascadeSpec {
    pub fn new(zetas: Vec<f64>, m: usize, seed: u64) -> Result<Self> {
        let s = Self { zetas, m, seed };
        s.validate()?;
        Ok(s)
    }

    /// Levels read off the breakpoints of `q`.
    pub fn for_path(q: &StepPath, m: usize, seed: u64) -> Result<Self> {
        Self::new(q.breakpoints().to_vec(), m, seed)
    }

    pub fn depth(&self) -> usize {
        self.zetas.len()
    }

    pub fn leaves(&self) -> usize {
        self.m.saturating_pow(self.zetas.len() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidCascade("truncation M must be at least 2".into()));
        }
        let mut prev = 0.0;
        for &z in &self.zetas {
            if !(z > prev && z < 1.0) {
                return Err(Error::InvalidCascade(format!(
                    "levels must increase strictly inside (0,1): {:?}",
                    self.zetas
                )));
            }
            prev = z;
        }
        if self.leaves() > MAX_LEAVES {
            return Err(Error::InvalidCascade(format!(
                "M^K = {}^{} leaves exceeds the cap of {MAX_LEAVES}",
                self.m,
                self.zetas.len()
            )));
        }
        Ok(())
    }

    fn check_path(&self, q: &StepPath) -> Result<()> {
        self.validate()?;
        let z = q.breakpoints();
        if z.len() != self.zetas.len() || z.iter().zip(&self.zetas).any(|(a, b)| (a - b).abs() > 1e-14) {
            return Err(Error::InvalidCascade(format!(
                "cascade levels {:?} do not match path breakpoints {z:?}",
                self.zetas
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_law(q: &StepPath, law: &SpinLaw) -> Result<()> {
    if q.values()[0].dim() != law.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.values()[0].dim(),
            got: law.dim(),
        });
    }
    Ok(())
}

/// `y ↦ log Σ_σ P₁(σ) exp(√2 y·σ − σ·q_K σ)`, the top of the ψ recursion.
#[derive(Clone, Debug)]
pub(crate) struct TopLevel {
    atoms: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl TopLevel {
    pub fn new(q_top: &crate::linalg::SymMatrix, law: &SpinLaw) -> Self {
        let d = law.dim();
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut atoms = Vec::new();
        let mut offsets = Vec::new();
        for (a, &w) in law.atoms().iter().zip(law.weights()) {
            if w == 0.0 {
                continue;
            }
            let mut quad = 0.0;
            for i in 0..d {
                for j in 0..d {
                    quad += a[i] * q_top.get(i, j) * a[j];
                }
            }
            atoms.push(a.iter().map(|x| sqrt2 * x).collect());
            offsets.push(w.ln() - quad);
        }
        Self { atoms, offsets }
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        let mut m = f64::NEG_INFINITY;
        let mut vals = [0.0f64; 16];
        let big = self.atoms.len() > 16;
        let mut spill = Vec::new();
        for (k, (a, o)) in self.atoms.iter().zip(&self.offsets).enumerate() {
            let v = o + a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>();
            if big {
                spill.push(v);
            } else {
                vals[k] = v;
            }
            m = m.max(v);
        }
        let vs: &[f64] = if big { &spill } else { &vals[..self.atoms.len()] };
        m + vs.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }
}

/// Mean with standard error of an i.i.d. sample.
pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_law_validation() {
        assert!(SpinLaw::new(vec![vec![1.0, 1.0]], vec![1.0]).is_err());
        assert!(SpinLaw::new(vec![vec![1.0], vec![0.5]], vec![0.5, 0.6]).is_err());
        assert_eq!(SpinLaw::square_corners().mean(), vec![0.0, 0.0]);
    }

    #[test]
    fn cascade_spec_validation() {
        assert!(CascadeSpec::new(vec![0.5, 0.4], 10, 0).is_err());
        assert!(CascadeSpec::new(vec![0.5], 1, 0).is_err());
        assert!(CascadeSpec::new(vec![0.2, 0.5], 201, 0).is_err());
        assert_eq!(CascadeSpec::new(vec![0.2, 0.5], 200, 0).unwrap().leaves(), 40_000);
    }

    #[test]
    fn top_level_matches_log_cosh() {
        let t = TopLevel::new(&crate::linalg::SymMatrix::scalar(0.3), &SpinLaw::ising());
        let y = 0.8;
        let expect = (std::f64::consts::SQRT_2 * y).cosh().ln() - 0.3;
        assert!((t.eval(&[y]) - expect).abs() < 1e-14);
    }
}
