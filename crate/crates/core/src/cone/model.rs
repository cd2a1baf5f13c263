use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::certify::CertificationReport;
use crate::error::{Error, Result};
use crate::linalg::{PsdMatrix, SymMatrix};

/// One term `c · Π a[i_k][j_k]` of a polynomial interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coefficient: f64,
    pub entries: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum XiKind {
    /// `ξ(x) = Σ_p c_p x^p` for `D = 1`; `coeffs[p-1] = c_p = β_p²`.
    ScalarMixedPSpin { coeffs: Vec<f64> },
    /// `ξ(a) = Σ_{dd'} Δ²_{dd'} a_{dd'}²` with a symmetric, PSD, nonnegative weight matrix.
    EntrywiseQuadratic { weights: SymMatrix },
    /// `ξ(a) = c |a|_F²`.
    FrobeniusSquare { c: f64 },
    /// Arbitrary polynomial; admissible only after [`XiModel::certify`] passes.
    MonomialSum { terms: Vec<Monomial> },
}

/// Serialized form `{kind, dim, coefficients}` used in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiModelSpec {
    pub kind: String,
    pub dim: usize,
    pub coefficients: Value,
}

/// A convex interaction function on `D×D` symmetric matrices.
#[derive(Clone, Debug)]
pub struct XiModel {
    dim: usize,
    kind: XiKind,
    certification: Option<CertificationReport>,
}

impl XiModel {
    pub fn scalar_mixed_pspin(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidModel("no p-spin coefficients".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidModel(
                "p-spin coefficients must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            dim: 1,
            kind: XiKind::ScalarMixedPSpin { coeffs },
            certification: None,
        })
    }

    /// Sherrington–Kirkpatrick interaction `β² x²`.
    pub fn sk(beta: f64) -> Self {
        Self::scalar_mixed_pspin(vec![0.0, beta * beta]).expect("valid coefficients")
    }

    pub fn entrywise_quadratic(weights: SymMatrix) -> Result<Self> {
        let d = weights.dim();
        for i in 0..d {
            for j in 0..d {
                if weights.get(i, j) < 0.0 {
                    return Err(Error::InvalidModel(
                        "entrywise weights must be nonnegative".into(),
                    ));
                }
            }
        }
        // Schur product theorem: PSD weights keep ∇ξ monotone on the cone.
        if !weights.is_psd() {
            return Err(Error::InvalidModel(
                "entrywise weight matrix must be positive semi-definite".into(),
            ));
        }
        Ok(Self {
            dim: d,
            kind: XiKind::EntrywiseQuadratic { weights },
            certification: None,
        })
    }

    pub fn frobenius_square(dim: usize, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || dim == 0 {
            return Err(Error::InvalidModel(
                "frobenius_square needs c > 0 and dim ≥ 1".into(),
            ));
        }
        Ok(Self {
            dim,
            kind: XiKind::FrobeniusSquare { c },
            certification: None,
        })
    }

    pub fn monomial_sum(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        if dim == 0 || terms.is_empty() {
            return Err(Error::InvalidModel("empty monomial sum".into()));
        }
        for t in &terms {
            if t.entries.is_empty() {
                return Err(Error::InvalidModel(
                    "constant monomials are not allowed (ξ(0) = 0)".into(),
                ));
            }
            if !t.coefficient.is_finite() {
                return Err(Error::NonFinite("monomial coefficient"));
            }
            if t.entries.iter().any(|&(i, j)| i >= dim || j >= dim) {
                return Err(Error::InvalidModel("monomial index out of range".into()));
            }
        }
        Ok(Self {
            dim,
            kind: XiKind::MonomialSum { terms },
            certification: None,
        })
    }

    pub fn from_spec(spec: &XiModelSpec) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("model.coefficients: {what}"));
        match spec.kind.as_str() {
            "scalar_mixed_pspin" => {
                if spec.dim != 1 {
                    return Err(Error::Config("model.dim must be 1 for scalar_mixed_pspin".into()));
                }
                let coeffs: Vec<f64> = serde_json::from_value(spec.coefficients.clone())
                    .map_err(|e| bad(&e.to_string()))?;
                Self::scalar_mixed_pspin(coeffs)
            }
            "entrywise_quadratic" => {
                let w: SymMatrix = serde_json::from_value(spec.coefficients.clone())
                    .map_err(|e| bad(&e.to_string()))?;
                if w.dim() != spec.dim {
                    return Err(bad("weight matrix dimension differs from model.dim"));
                }
                Self::entrywise_quadratic(w)
            }
            "frobenius_square" => {
                let c = match &spec.coefficients {
                    Value::Number(n) => n.as_f64(),
                    Value::Array(a) if a.len() == 1 => a[0].as_f64(),
                    _ => None,
                }
                .ok_or_else(|| bad("expected a number or a one-element array"))?;
                Self::frobenius_square(spec.dim, c)
            }
            "monomial_sum" => {
                let terms: Vec<Monomial> = serde_json::from_value(spec.coefficients.clone())
                    .map_err(|e| bad(&e.to_string()))?;
                Self::monomial_sum(spec.dim, terms)
            }
            other => Err(Error::Config(format!("model.kind: unknown kind `{other}`"))),
        }
    }

    pub fn to_spec(&self) -> XiModelSpec {
        let (kind, coefficients) = match &self.kind {
            XiKind::ScalarMixedPSpin { coeffs } => ("scalar_mixed_pspin", serde_json::json!(coeffs)),
            XiKind::EntrywiseQuadratic { weights } => {
                ("entrywise_quadratic", serde_json::json!(weights.to_rows()))
            }
            XiKind::FrobeniusSquare { c } => ("frobenius_square", serde_json::json!(c)),
            XiKind::MonomialSum { terms } => ("monomial_sum", serde_json::json!(terms)),
        };
        XiModelSpec {
            kind: kind.into(),
            dim: self.dim,
            coefficients,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &XiKind {
        &self.kind
    }

    pub fn is_catalogue(&self) -> bool {
        !matches!(self.kind, XiKind::MonomialSum { .. })
    }

    /// Catalogue strictness flag; monomial sums rely on their certification.
    pub fn strictly_convex(&self) -> bool {
        match &self.kind {
            XiKind::ScalarMixedPSpin { coeffs } => coeffs.iter().skip(1).any(|&c| c > 0.0),
            XiKind::EntrywiseQuadratic { weights } => {
                let d = weights.dim();
                (0..d).all(|i| (0..d).all(|j| weights.get(i, j) > 0.0))
            }
            XiKind::FrobeniusSquare { .. } => true,
            XiKind::MonomialSum { .. } => self
                .certification
                .as_ref()
                .is_some_and(|c| c.passed() && c.strict_convexity.as_ref().is_some_and(|s| s.passed)),
        }
    }

    /// Convex, monotone and superlinear on the cone: catalogue kinds by
    /// construction (given a superlinear term), monomial sums once certified.
    pub fn is_admissible(&self) -> bool {
        match &self.kind {
            XiKind::ScalarMixedPSpin { coeffs } => coeffs.iter().skip(1).any(|&c| c > 0.0),
            XiKind::EntrywiseQuadratic { weights } => {
                (0..weights.dim()).all(|i| weights.get(i, i) > 0.0)
            }
            XiKind::FrobeniusSquare { .. } => true,
            XiKind::MonomialSum { .. } => self.certification.as_ref().is_some_and(|c| c.passed()),
        }
    }

    pub fn certification(&self) -> Option<&CertificationReport> {
        self.certification.as_ref()
    }

    /// Runs the sampled certification and caches the report on the model.
    pub fn certify(&mut self, n_samples: usize, seed: u64) -> &CertificationReport {
        let report = super::certify::check_model(self, n_samples, seed);
        self.certification = Some(report);
        self.certification.as_ref().expect("just set")
    }

    fn check(&self, a: &SymMatrix) -> Result<()> {
        a.check_dim(self.dim)?;
        if !a.is_finite() {
            return Err(Error::NonFinite("argument of ξ"));
        }
        Ok(())
    }

    pub fn eval(&self, a: &SymMatrix) -> Result<f64> {
        self.check(a)?;
        Ok(self.eval_unchecked(a))
    }

    pub(crate) fn eval_unchecked(&self, a: &SymMatrix) -> f64 {
        match &self.kind {
            XiKind::ScalarMixedPSpin { coeffs } => {
                let x = a.get(0, 0);
                // Horner on Σ c_p x^p = x (c_1 + x (c_2 + ...))
                x * coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            XiKind::EntrywiseQuadratic { weights } => {
                let d = self.dim;
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += weights.get(i, j) * a.get(i, j) * a.get(i, j);
                    }
                }
                s
            }
            XiKind::FrobeniusSquare { c } => c * a.dot(a),
            XiKind::MonomialSum { terms } => terms
                .iter()
                .map(|t| t.coefficient * t.entries.iter().map(|&(i, j)| a.get(i, j)).product::<f64>())
                .sum(),
        }
    }

    /// `ξ` at a general (possibly non-symmetric) `D×D` matrix, as needed for
    /// overlaps `στ*/N` of two different configurations.
    pub fn eval_general(&self, a: &nalgebra::DMatrix<f64>) -> Result<f64> {
        if a.nrows() != self.dim || a.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.nrows(),
            });
        }
        Ok(match &self.kind {
            XiKind::ScalarMixedPSpin { coeffs } => {
                let x = a[(0, 0)];
                x * coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            XiKind::EntrywiseQuadratic { weights } => {
                let d = self.dim;
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += weights.get(i, j) * a[(i, j)] * a[(i, j)];
                    }
                }
                s
            }
            XiKind::FrobeniusSquare { c } => c * a.norm_squared(),
            XiKind::MonomialSum { terms } => terms
                .iter()
                .map(|t| t.coefficient * t.entries.iter().map(|&(i, j)| a[(i, j)]).product::<f64>())
                .sum(),
        })
    }

    /// Gradient for the Frobenius pairing, symmetric by construction.
    pub fn grad(&self, a: &SymMatrix) -> Result<SymMatrix> {
        self.check(a)?;
        Ok(self.grad_unchecked(a))
    }

    pub(crate) fn grad_unchecked(&self, a: &SymMatrix) -> SymMatrix {
        match &self.kind {
            XiKind::ScalarMixedPSpin { coeffs } => {
                let x = a.get(0, 0);
                let mut g = 0.0;
                let mut pow = 1.0;
                for (k, c) in coeffs.iter().enumerate() {
                    g += (k + 1) as f64 * c * pow;
                    pow *= x;
                }
                SymMatrix::scalar(g)
            }
            XiKind::EntrywiseQuadratic { weights } => {
                let d = self.dim;
                let m = nalgebra::DMatrix::from_fn(d, d, |i, j| 2.0 * weights.get(i, j) * a.get(i, j));
                SymMatrix::from_matrix(m).expect("finite")
            }
            XiKind::FrobeniusSquare { c } => a.scale(2.0 * c),
            XiKind::MonomialSum { terms } => {
                let d = self.dim;
                let mut g = nalgebra::DMatrix::zeros(d, d);
                for t in terms {
                    for (k, &(i, j)) in t.entries.iter().enumerate() {
                        let rest: f64 = t
                            .entries
                            .iter()
                            .enumerate()
                            .filter(|(l, _)| *l != k)
                            .map(|(_, &(r, s))| a.get(r, s))
                            .product();
                        g[(i, j)] += t.coefficient * rest;
                    }
                }
                // Partials treat a_ij and a_ji as independent; symmetrizing gives
                // the gradient for symmetric perturbations.
                SymMatrix::from_matrix(g).expect("finite")
            }
        }
    }

    /// `θ(a) = a·∇ξ(a) − ξ(a)` on the cone.
    pub fn theta(&self, a: &SymMatrix) -> Result<f64> {
        self.check(a)?;
        PsdMatrix::new(a.clone())?;
        Ok(self.theta_unchecked(a))
    }

    pub(crate) fn theta_unchecked(&self, a: &SymMatrix) -> f64 {
        a.dot(&self.grad_unchecked(a)) - self.eval_unchecked(a)
    }

    /// Upper bound on `sup_{|a|_F ≤ 1} |ξ(a)|` (exact for the catalogue kinds).
    pub fn sup_unit_ball(&self) -> f64 {
        match &self.kind {
            XiKind::ScalarMixedPSpin { coeffs } => coeffs.iter().map(|c| c.abs()).sum(),
            XiKind::EntrywiseQuadratic { weights } => {
                let d = self.dim;
                (0..d)
                    .flat_map(|i| (0..d).map(move |j| (i, j)))
                    .map(|(i, j)| weights.get(i, j))
                    .fold(0.0, f64::max)
            }
            XiKind::FrobeniusSquare { c } => *c,
            XiKind::MonomialSum { terms } => terms.iter().map(|t| t.coefficient.abs()).sum(),
        }
    }

    /// Upper bound on `sup_{|a|_F ≤ 1} |∇ξ(a)|_F`.
    pub fn grad_bound_unit_ball(&self) -> f64 {
        match &self.kind {
            XiKind::ScalarMixedPSpin { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| (k + 1) as f64 * c.abs())
                .sum(),
            XiKind::EntrywiseQuadratic { .. } => 2.0 * self.sup_unit_ball(),
            XiKind::FrobeniusSquare { c } => 2.0 * c,
            XiKind::MonomialSum { terms } => terms
                .iter()
                .map(|t| t.entries.len() as f64 * t.coefficient.abs() * 2.0)
                .sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn catalogue() -> Vec<XiModel> {
        vec![
            XiModel::scalar_mixed_pspin(vec![0.0, 1.0]).unwrap(),
            XiModel::scalar_mixed_pspin(vec![0.1, 0.5, 0.3]).unwrap(),
            XiModel::frobenius_square(2, 0.5).unwrap(),
            XiModel::frobenius_square(3, 1.3).unwrap(),
            XiModel::entrywise_quadratic(SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap())
                .unwrap(),
            XiModel::entrywise_quadratic(
                SymMatrix::from_rows(&[
                    vec![1.0, 0.4, 0.2],
                    vec![0.4, 0.8, 0.3],
                    vec![0.2, 0.3, 0.6],
                ])
                .unwrap(),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        let sk = XiModel::scalar_mixed_pspin(vec![0.0, 1.0]).unwrap();
        assert_eq!(sk.eval(&SymMatrix::scalar(0.5)).unwrap(), 0.25);
        let fro = XiModel::frobenius_square(2, 0.5).unwrap();
        assert_eq!(fro.eval(&SymMatrix::identity(2)).unwrap(), 1.0);
        let ew = XiModel::entrywise_quadratic(SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap())
            .unwrap();
        let a = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        assert!((ew.eval(&a).unwrap() - 5.18).abs() < 1e-12);
    }

    #[test]
    fn eval_rejects_bad_input() {
        let sk = XiModel::sk(1.0);
        assert!(matches!(
            sk.eval(&SymMatrix::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn grad_examples() {
        let sk = XiModel::scalar_mixed_pspin(vec![0.0, 1.0]).unwrap();
        assert_eq!(sk.grad(&SymMatrix::scalar(0.5)).unwrap().get(0, 0), 1.0);
        let fro = XiModel::frobenius_square(2, 0.5).unwrap();
        let a = SymMatrix::from_rows(&[vec![0.3, -0.2], vec![-0.2, 1.1]]).unwrap();
        assert!(fro.grad(&a).unwrap().dist(&a) < 1e-15);
    }

    fn fd_grad(model: &XiModel, a: &SymMatrix, h: f64) -> SymMatrix {
        let d = a.dim();
        let mut g = nalgebra::DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let e = SymMatrix::basis(d, i, j);
                let fp = model.eval(&(a + &e.scale(h))).unwrap();
                let fm = model.eval(&(a - &e.scale(h))).unwrap();
                let dd = (fp - fm) / (2.0 * h);
                // directional derivative along E_ij + E_ji is 2 g_ij off the diagonal
                let v = if i == j { dd } else { dd / 2.0 };
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        SymMatrix::from_matrix(g).unwrap()
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut models = catalogue();
        models.push(
            XiModel::monomial_sum(
                2,
                vec![
                    Monomial { coefficient: 0.7, entries: vec![(0, 0), (0, 0)] },
                    Monomial { coefficient: 0.4, entries: vec![(0, 1), (1, 0), (1, 1)] },
                    Monomial { coefficient: 0.2, entries: vec![(1, 1)] },
                ],
            )
            .unwrap(),
        );
        for m in &models {
            for _ in 0..20 {
                let d = m.dim();
                let a = SymMatrix::from_matrix(nalgebra::DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0)))
                    .unwrap();
                let g = m.grad(&a).unwrap();
                let fd = fd_grad(m, &a, 1e-5);
                assert!(g.dist(&fd) <= 1e-6 * (1.0 + g.norm()), "{:?} vs {:?}", g, fd);
            }
        }
    }

    #[test]
    fn theta_examples() {
        let sk = XiModel::scalar_mixed_pspin(vec![0.0, 1.0]).unwrap();
        assert!((sk.theta(&SymMatrix::scalar(0.7)).unwrap() - 0.49).abs() < 1e-15);
        for m in catalogue() {
            assert_eq!(m.theta(&SymMatrix::zeros(m.dim())).unwrap(), 0.0);
        }
        assert!(sk.theta(&SymMatrix::scalar(-0.1)).is_err());
    }

    #[test]
    fn spec_round_trip() {
        for m in catalogue() {
            let back = XiModel::from_spec(&m.to_spec()).unwrap();
            assert_eq!(back.kind(), m.kind());
        }
        let bad = XiModelSpec {
            kind: "cubic".into(),
            dim: 1,
            coefficients: serde_json::json!([1.0]),
        };
        assert!(XiModel::from_spec(&bad).is_err());
    }

    #[test]
    fn entrywise_rejects_indefinite_weights() {
        let w = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(XiModel::entrywise_quadratic(w).is_err());
    }
}
