//! Deterministic evaluation of `ψ` by the backward cascade recursion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_law, SpinLaw, TopLevel};
use crate::error::{Error, Result};
use crate::linalg::psd_project;
use crate::path::StepPath;
use crate::quadrature::{Bicubic, GaussianRule, Spline1d};

/// Quadrature order per level and the spatial grid for intermediate levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiGridConfig {
    pub order: usize,
    pub resolution: usize,
    /// Half-width of the grid box; `None` sizes each level from the span of
    /// the quadrature nodes that can reach it.
    #[serde(default)]
    pub bound: Option<f64>,
}

impl Default for PsiGridConfig {
    fn default() -> Self {
        Self {
            order: 24,
            resolution: 257,
            bound: None,
        }
    }
}

impl PsiGridConfig {
    /// Cheaper settings for two-dimensional optimization loops.
    pub fn coarse() -> Self {
        Self {
            order: 12,
            resolution: 65,
            bound: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 8 {
            return Err(Error::Grid(format!("quadrature order {} < 8", self.order)));
        }
        if self.resolution < 5 || self.resolution % 2 == 0 {
            return Err(Error::Grid(format!(
                "grid resolution {} must be odd and at least 5",
                self.resolution
            )));
        }
        if let Some(b) = self.bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Grid(format!("grid bound {b} must be positive")));
            }
        }
        Ok(())
    }
}

enum Level<'a> {
    Top(&'a TopLevel),
    D1(Spline1d),
    D2(Bicubic),
}

impl Level<'_> {
    #[inline]
    fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Level::Top(t) => t.eval(y),
            Level::D1(s) => s.eval(y[0]),
            Level::D2(b) => b.eval(y[0], y[1]),
        }
    }
}

/// `ζ⁻¹ log E exp(ζ F(y + g))` with `g` drawn from `rule`.
#[inline]
fn average(next: &Level, rule: &GaussianRule, zeta: f64, y: &[f64], buf: &mut Vec<f64>) -> f64 {
    let d = y.len();
    buf.clear();
    let mut m = f64::NEG_INFINITY;
    let mut shifted = [0.0f64; 4];
    for (p, lw) in rule.points.iter().zip(&rule.log_weights) {
        for k in 0..d {
            shifted[k] = y[k] + p[k];
        }
        let v = lw + zeta * next.eval(&shifted[..d]);
        m = m.max(v);
        buf.push(v);
    }
    (m + buf.iter().map(|v| (v - m).exp()).sum::<f64>().ln()) / zeta
}

/// `ψ(q) = −E X_0(g_0)` with `X_K` the log-partition function of one spin,
/// `X_{k−1}(y) = ζ_k⁻¹ log E exp(ζ_k X_k(y + g_k))`, `g_k ~ N(0, q_k − q_{k−1})`.
pub fn psi_grid(q: &StepPath, law: &SpinLaw, cfg: &PsiGridConfig) -> Result<f64> {
    cfg.validate()?;
    check_law(q, law)?;
    let d = law.dim();
    if d > 2 {
        return Err(Error::Grid(format!("grid evaluation supports D ≤ 2, got D = {d}")));
    }
    if q.is_zero() {
        return Ok(0.0);
    }
    let values = q.values();
    let k_top = q.levels();
    let zetas = q.breakpoints();
    let rules: Vec<GaussianRule> = (0..=k_top)
        .map(|k| {
            let inc = if k == 0 {
                values[0].clone()
            } else {
                &values[k] - &values[k - 1]
            };
            GaussianRule::new(psd_project(&inc).as_sym(), cfg.order)
        })
        .collect();
    let mut reach = vec![vec![0.0; d]; k_top + 1];
    let mut acc = vec![0.0; d];
    for k in 0..=k_top {
        for (a, s) in acc.iter_mut().zip(rules[k].span()) {
            *a += s;
        }
        reach[k] = acc.clone();
    }
    let top = TopLevel::new(&values[k_top], law);
    let mut next = Level::Top(&top);
    for k in (1..k_top).rev() {
        let half: Vec<f64> = reach[k]
            .iter()
            .map(|&r| match cfg.bound {
                // a user box narrower than the nodes' reach is widened once
                Some(b) => b.max(r),
                None => r,
            })
            .collect();
        if half.iter().any(|h| !h.is_finite()) {
            return Err(Error::Grid("non-finite grid box".into()));
        }
        let n: Vec<usize> = half
            .iter()
            .map(|&h| if h < 1e-12 { 1 } else { cfg.resolution })
            .collect();
        let h: Vec<f64> = half
            .iter()
            .zip(&n)
            .map(|(&hw, &n)| if n == 1 { 1.0 } else { 2.0 * hw / (n - 1) as f64 })
            .collect();
        let x0: Vec<f64> = half.iter().zip(&n).map(|(&hw, &n)| if n == 1 { 0.0 } else { -hw }).collect();
        let total: usize = n.iter().product();
        let zeta = zetas[k];
        let rule = &rules[k + 1];
        let ny = if d == 2 { n[1] } else { 1 };
        let vals: Vec<f64> = (0..total)
            .into_par_iter()
            .with_min_len(64)
            .map_init(Vec::new, |buf, idx| {
                let mut y = [0.0f64; 2];
                if d == 1 {
                    y[0] = x0[0] + idx as f64 * h[0];
                } else {
                    y[0] = x0[0] + (idx / ny) as f64 * h[0];
                    y[1] = x0[1] + (idx % ny) as f64 * h[1];
                }
                average(&next, rule, zeta, &y[..d], buf)
            })
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at level {k}")));
        }
        next = if d == 1 {
            Level::D1(Spline1d::new(x0[0], h[0], vals))
        } else {
            Level::D2(Bicubic::new([x0[0], x0[1]], [h[0], h[1]], [n[0], n[1]], &vals))
        };
    }
    let mut buf = Vec::new();
    let mut psi = 0.0;
    for (p, lw) in rules[0].points.iter().zip(&rules[0].log_weights) {
        let x0 = if k_top == 0 {
            next.eval(p)
        } else {
            average(&next, &rules[1], zetas[0], p, &mut buf)
        };
        psi -= lw.exp() * x0;
    }
    if !psi.is_finite() {
        return Err(Error::Grid("ψ evaluated to a non-finite value".into()));
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;

    /// `E f(Z)` for standard normal `Z` by composite Simpson on [−10, 10].
    fn simpson_normal(f: impl Fn(f64) -> f64) -> f64 {
        let n = 4000;
        let (a, b) = (-10.0, 10.0);
        let h = (b - a) / n as f64;
        let g = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * f(z);
        let mut s = g(a) + g(b);
        for i in 1..n {
            s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn fine() -> PsiGridConfig {
        PsiGridConfig {
            order: 120,
            resolution: 257,
            bound: None,
        }
    }

    fn log_cosh(x: f64) -> f64 {
        x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2
    }

    #[test]
    fn zero_path_gives_zero() {
        let cfg = PsiGridConfig::default();
        assert_eq!(psi_grid(&StepPath::zero(1), &SpinLaw::ising(), &cfg).unwrap(), 0.0);
        assert_eq!(psi_grid(&StepPath::zero(2), &SpinLaw::square_corners(), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn constant_ising_path_matches_quadrature_oracle() {
        let q = StepPath::constant(SymMatrix::scalar(0.5)).unwrap();
        let expect = 0.5 - simpson_normal(|z| log_cosh(z));
        // Gauss–Hermite converges slowly on log cosh; the default order is good to 1e-6
        let v = psi_grid(&q, &SpinLaw::ising(), &PsiGridConfig::default()).unwrap();
        assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
        let v = psi_grid(&q, &SpinLaw::ising(), &fine()).unwrap();
        assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
    }

    #[test]
    fn one_level_ising_path_matches_quadrature_oracle() {
        // q = 0 on [0, ζ), c on [ζ, 1): ψ = c − ζ⁻¹ log E cosh(√(2c) Z)^ζ
        let (zeta, c) = (0.4, 0.9);
        let q = StepPath::new(vec![zeta], vec![SymMatrix::scalar(0.0), SymMatrix::scalar(c)]).unwrap();
        let s = (2.0 * c).sqrt();
        let expect = c - simpson_normal(|z| (zeta * log_cosh(s * z)).exp()).ln() / zeta;
        let v = psi_grid(&q, &SpinLaw::ising(), &PsiGridConfig::default()).unwrap();
        assert!((v - expect).abs() < 1e-5, "{v} vs {expect}");
        let v = psi_grid(&q, &SpinLaw::ising(), &fine()).unwrap();
        assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
    }

    #[test]
    fn rejects_bad_config() {
        let q = StepPath::constant(SymMatrix::scalar(0.5)).unwrap();
        let bad = PsiGridConfig {
            order: 4,
            ..PsiGridConfig::default()
        };
        assert!(psi_grid(&q, &SpinLaw::ising(), &bad).is_err());
        let even = PsiGridConfig {
            resolution: 256,
            ..PsiGridConfig::default()
        };
        assert!(psi_grid(&q, &SpinLaw::ising(), &even).is_err());
    }

    #[test]
    fn depth_two_is_stable_under_refinement() {
        let law = SpinLaw::ising();
        let q = StepPath::new(
            vec![0.3, 0.7],
            vec![SymMatrix::scalar(0.1), SymMatrix::scalar(0.5), SymMatrix::scalar(1.2)],
        )
        .unwrap();
        let a = psi_grid(&q, &law, &PsiGridConfig::default()).unwrap();
        let b = psi_grid(
            &q,
            &law,
            &PsiGridConfig {
                order: 40,
                resolution: 1025,
                bound: None,
            },
        )
        .unwrap();
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }

    #[test]
    fn two_dimensional_grid_is_stable_under_refinement() {
        let law = SpinLaw::square_corners();
        let q = StepPath::new(
            vec![0.3, 0.6],
            vec![
                SymMatrix::from_rows(&[vec![0.2, 0.05], vec![0.05, 0.1]]).unwrap(),
                SymMatrix::from_rows(&[vec![0.5, 0.1], vec![0.1, 0.4]]).unwrap(),
                SymMatrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.8]]).unwrap(),
            ],
        )
        .unwrap();
        let coarse = psi_grid(&q, &law, &PsiGridConfig::coarse()).unwrap();
        let fine = psi_grid(&q, &law, &PsiGridConfig::default()).unwrap();
        assert!((coarse - fine).abs() < 1e-4, "{coarse} vs {fine}");
    }
}
