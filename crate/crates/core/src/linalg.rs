//! Small symmetric matrices and the positive semi-definite cone.
//!
//! Everything here works with the Frobenius pairing `a·b = Σ a_ij b_ij`.
//! Dimensions are tiny (D ≤ 4 in practice), so matrices are stored densely
//! and eigen-decompositions are recomputed on demand.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance for cone membership: `λ_min ≥ -PSD_REL_TOL·(1+|a|)`.
pub const PSD_REL_TOL: f64 = 1e-10;

/// A real symmetric `D×D` matrix. Symmetry is enforced on construction.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from a square one by symmetrizing it.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        let t = m.transpose();
        Ok(Self { m: (m + t) * 0.5 })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        let mut m = DMatrix::zeros(d, d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Self::from_matrix(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// `1×1` matrix holding `x`.
    pub fn scalar(x: f64) -> Self {
        Self {
            m: DMatrix::from_element(1, 1, x),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        Self { m }
    }

    /// Symmetric basis direction: `E_ii` on the diagonal, `E_ij + E_ji` off it.
    pub fn basis(dim: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, j)] = 1.0;
        m[(j, i)] = 1.0;
        Self { m }
    }

    /// Rank-one matrix `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        let d = v.len();
        Self {
            m: DMatrix::from_fn(d, d, |i, j| v[i] * v[j]),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.m[(i, j)]).collect())
            .collect()
    }

    /// Frobenius pairing.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.m.dot(&other.m)
    }

    pub fn norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix { m: &self.m * s }
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|x| x.is_finite())
    }

    /// Eigenvalues in ascending order with matching unit eigenvectors (columns).
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.dim();
        if d == 1 {
            return (vec![self.m[(0, 0)]], DMatrix::identity(1, 1));
        }
        let se = SymmetricEigen::new(self.m.clone());
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(d, d, |r, c| se.eigenvectors[(r, idx[c])]);
        (vals, vecs)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    pub fn min_eig(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eig(&self) -> f64 {
        *self.eigenvalues().last().expect("dim ≥ 1")
    }

    pub fn psd_tol(&self) -> f64 {
        PSD_REL_TOL * (1.0 + self.norm())
    }

    pub fn is_psd(&self) -> bool {
        self.min_eig() >= -self.psd_tol()
    }

    /// Rebuilds `V diag(f(λ)) Vᵀ`.
    pub fn map_eigen(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let (vals, vecs) = self.eigen();
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (k, &l) in vals.iter().enumerate() {
            let fl = f(l);
            if fl == 0.0 {
                continue;
            }
            let v = vecs.column(k);
            m += v * v.transpose() * fl;
        }
        SymMatrix::from_matrix(m).expect("finite by construction")
    }

    /// Frobenius distance.
    pub fn dist(&self, other: &SymMatrix) -> f64 {
        (&self.m - &other.m).norm()
    }

    /// Equality up to `1e-12` relative Frobenius tolerance.
    pub fn approx_eq(&self, other: &SymMatrix) -> bool {
        self.dist(other) <= 1e-12 * (1.0 + self.norm().max(other.norm()))
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_rows())
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m + &rhs.m }
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m - &rhs.m }
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix { m: -&self.m }
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

/// A symmetric matrix certified to lie in `S^D_+` within [`PSD_REL_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PsdMatrix(SymMatrix);

impl PsdMatrix {
    pub fn new(base: SymMatrix) -> Result<Self> {
        let min_eig = base.min_eig();
        if min_eig < -base.psd_tol() {
            return Err(Error::NotPsd { min_eig });
        }
        Ok(Self(base))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(SymMatrix::zeros(dim))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }
}

impl<'de> Deserialize<'de> for PsdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = SymMatrix::deserialize(d)?;
        PsdMatrix::new(s).map_err(serde::de::Error::custom)
    }
}

/// Euclidean (Frobenius) projection onto `S^D_+` by clipping negative eigenvalues.
pub fn psd_project(s: &SymMatrix) -> PsdMatrix {
    PsdMatrix(s.map_eigen(|l| l.max(0.0)))
}

/// Principal square root of a PSD matrix; negative round-off eigenvalues are clipped.
pub fn psd_sqrt(a: &SymMatrix) -> SymMatrix {
    a.map_eigen(|l| l.max(0.0).sqrt())
}

/// Ratio `λ_max/λ_min` of a positive definite matrix.
pub fn ellipt(a: &SymMatrix) -> Result<f64> {
    let vals = a.eigenvalues();
    let lo = vals[0];
    if lo <= a.psd_tol() {
        return Err(Error::NotPositiveDefinite { min_eig: lo });
    }
    Ok(vals[vals.len() - 1] / lo)
}

/// `a ≤ b` in the Loewner order, within the cone tolerance.
pub fn loewner_le(a: &SymMatrix, b: &SymMatrix) -> bool {
    (b - a).is_psd()
}
