//! Gaussian quadrature and grid interpolation used by the ψ recursion.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::linalg::SymMatrix;

/// Nodes and weights of the `n`-point Gauss–Hermite rule for `E f(Z)`, `Z ~ N(0,1)`.
///
/// Golub–Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("cache lock").get(&n) {
        return hit.clone();
    }
    let n = n.max(1);
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let se = nalgebra::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (se.eigenvalues[i], se.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize: the rule is exactly symmetric about 0
    for i in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let out: (Vec<f64>, Vec<f64>) = pairs.into_iter().map(|(x, w)| (x, w / total)).unzip();
    cache.lock().expect("cache lock").insert(n, out.clone());
    out
}

/// Tensor Gauss–Hermite rule for `g ~ N(0, cov)` in `ℝ^D`.
#[derive(Clone, Debug)]
pub struct GaussianRule {
    pub points: Vec<Vec<f64>>,
    pub log_weights: Vec<f64>,
}

impl GaussianRule {
    /// Degenerate directions (eigenvalue below `1e-12·λ_max`) carry no nodes.
    /// A well-conditioned covariance uses its symmetric square root so that
    /// the nodes move smoothly with `cov`.
    pub fn new(cov: &SymMatrix, order: usize) -> Self {
        let d = cov.dim();
        let (vals, vecs) = cov.eigen();
        let top = vals.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 {
            return Self {
                points: vec![vec![0.0; d]],
                log_weights: vec![0.0],
            };
        }
        let keep: Vec<usize> = (0..d).filter(|&i| vals[i] > 1e-12 * top).collect();
        // columns of `factor` map standard normals to the field
        let factor: DMatrix<f64> = if keep.len() == d && vals[0] > 1e-8 * top {
            let mut s = DMatrix::zeros(d, d);
            for (k, &l) in vals.iter().enumerate() {
                let v = vecs.column(k);
                s += v * v.transpose() * l.sqrt();
            }
            s
        } else {
            DMatrix::from_fn(d, keep.len(), |r, c| vecs[(r, keep[c])] * vals[keep[c]].sqrt())
        };
        let (x, w) = gauss_hermite(order);
        let r = factor.ncols();
        let lw: Vec<f64> = w.iter().map(|w| w.ln()).collect();
        let mut points = Vec::new();
        let mut log_weights = Vec::new();
        let mut idx = vec![0usize; r];
        let cutoff = (1e-18f64).ln() + r as f64 * lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        loop {
            let lwt: f64 = idx.iter().map(|&i| lw[i]).sum();
            if lwt >= cutoff {
                let mut p = vec![0.0; d];
                for (c, &i) in idx.iter().enumerate() {
                    for (row, pr) in p.iter_mut().enumerate() {
                        *pr += factor[(row, c)] * x[i];
                    }
                }
                points.push(p);
                log_weights.push(lwt);
            }
            let mut c = 0;
            loop {
                if c == r {
                    return Self::normalized(points, log_weights);
                }
                idx[c] += 1;
                if idx[c] < x.len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
        }
    }

    fn normalized(points: Vec<Vec<f64>>, mut log_weights: Vec<f64>) -> Self {
        let lse = log_sum_exp(&log_weights);
        for w in &mut log_weights {
            *w -= lse;
        }
        Self { points, log_weights }
    }

    /// Largest `|g_axis|` over the nodes, per axis.
    pub fn span(&self) -> Vec<f64> {
        let d = self.points[0].len();
        (0..d)
            .map(|a| self.points.iter().map(|p| p[a].abs()).fold(0.0, f64::max))
            .collect()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Second derivatives of the natural cubic spline through equally spaced `f`.
fn natural_second_derivatives(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on (1, 4, 1) m = 6/h² Δ²f for interior nodes
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (f[i] - 2.0 * f[i + 1] + f[i + 2]) / (h * h);
        if i == 0 {
            c[i] = 1.0 / 4.0;
            d[i] = rhs / 4.0;
        } else {
            let den = 4.0 - c[i - 1];
            c[i] = 1.0 / den;
            d[i] = (rhs - d[i - 1]) / den;
        }
    }
    for i in (0..k).rev() {
        m[i + 1] = d[i] - if i + 1 < k { c[i] * m[i + 2] } else { 0.0 };
    }
    m
}

/// Natural cubic spline on a uniform grid; linear beyond the ends.
#[derive(Clone, Debug)]
pub struct Spline1d {
    x0: f64,
    h: f64,
    f: Vec<f64>,
    m: Vec<f64>,
}

impl Spline1d {
    pub fn new(x0: f64, h: f64, f: Vec<f64>) -> Self {
        let m = natural_second_derivatives(&f, h);
        Self { x0, h, f, m }
    }

    /// First derivative at every node.
    pub fn node_slopes(&self) -> Vec<f64> {
        let n = self.f.len();
        let h = self.h;
        (0..n)
            .map(|i| {
                if n == 1 {
                    0.0
                } else if i + 1 < n {
                    (self.f[i + 1] - self.f[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0
                } else {
                    (self.f[i] - self.f[i - 1]) / h + h * (self.m[i - 1] + 2.0 * self.m[i]) / 6.0
                }
            })
            .collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.f.len();
        if n == 1 {
            return self.f[0];
        }
        let h = self.h;
        let t = (x - self.x0) / h;
        if t <= 0.0 {
            let s = (self.f[1] - self.f[0]) / h - h * (2.0 * self.m[0] + self.m[1]) / 6.0;
            return self.f[0] + s * (x - self.x0);
        }
        let last = (n - 1) as f64;
        if t >= last {
            let s = (self.f[n - 1] - self.f[n - 2]) / h + h * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0;
            return self.f[n - 1] + s * (x - self.x0 - last * h);
        }
        let i = (t.floor() as usize).min(n - 2);
        let a = (i + 1) as f64 - t;
        let b = t - i as f64;
        a * self.f[i]
            + b * self.f[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Bicubic Hermite patches on a uniform 2-D grid, with nodal derivatives
/// taken from natural splines along each axis; clamped to the grid box.
#[derive(Clone, Debug)]
pub struct Bicubic {
    x0: [f64; 2],
    h: [f64; 2],
    n: [usize; 2],
    /// `[f, f_x, f_y, f_xy]` at node `i·n_y + j`.
    data: Vec<[f64; 4]>,
}

impl Bicubic {
    /// `f[i * n_y + j]` is the value at `(x0 + i hx, y0 + j hy)`.
    pub fn new(x0: [f64; 2], h: [f64; 2], n: [usize; 2], f: &[f64]) -> Self {
        let [nx, ny] = n;
        let mut fx = vec![0.0; nx * ny];
        let mut fy = vec![0.0; nx * ny];
        let mut fxy = vec![0.0; nx * ny];
        for j in 0..ny {
            let col: Vec<f64> = (0..nx).map(|i| f[i * ny + j]).collect();
            let s = Spline1d::new(x0[0], h[0], col).node_slopes();
            for i in 0..nx {
                fx[i * ny + j] = s[i];
            }
        }
        for i in 0..nx {
            let row = &f[i * ny..(i + 1) * ny];
            let s = Spline1d::new(x0[1], h[1], row.to_vec()).node_slopes();
            fy[i * ny..(i + 1) * ny].copy_from_slice(&s);
            let sx = Spline1d::new(x0[1], h[1], fx[i * ny..(i + 1) * ny].to_vec()).node_slopes();
            fxy[i * ny..(i + 1) * ny].copy_from_slice(&sx);
        }
        let data = (0..nx * ny).map(|k| [f[k], fx[k], fy[k], fxy[k]]).collect();
        Self { x0, h, n, data }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let locate = |v: f64, a: usize| -> (usize, f64) {
            let n = self.n[a];
            if n == 1 {
                return (0, 0.0);
            }
            let t = ((v - self.x0[a]) / self.h[a]).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            (i, t - i as f64)
        };
        let (i, s) = locate(x, 0);
        let (j, t) = locate(y, 1);
        let ny = self.n[1];
        let hermite = |u: f64| -> [f64; 4] {
            let u2 = u * u;
            let u3 = u2 * u;
            [2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2]
        };
        let hx = hermite(s);
        let hy = hermite(t);
        let (sx, sy) = (self.h[0], self.h[1]);
        let i1 = (i + 1).min(self.n[0] - 1);
        let j1 = (j + 1).min(ny - 1);
        let mut acc = 0.0;
        for (a, ii) in [(0usize, i), (1, i1)] {
            for (b, jj) in [(0usize, j), (1, j1)] {
                let d = &self.data[ii * ny + jj];
                let (wx0, wx1) = (hx[2 * a], hx[2 * a + 1] * sx);
                let (wy0, wy1) = (hy[2 * b], hy[2 * b + 1] * sy);
                acc += d[0] * wx0 * wy0 + d[1] * wx1 * wy0 + d[2] * wx0 * wy1 + d[3] * wx1 * wy1;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_moments() {
        let (x, w) = gauss_hermite(24);
        let moment = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-14);
        assert!(moment(1).abs() < 1e-14);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(10) - 945.0).abs() < 1e-7);
    }

    #[test]
    fn hermite_rule_matches_lognormal_mean() {
        // E exp(aZ) = exp(a²/2)
        let (x, w) = gauss_hermite(24);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * (0.7 * x).exp()).sum();
        assert!((v - (0.245f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn gaussian_rule_covariance() {
        let cov = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let r = GaussianRule::new(&cov, 12);
        let mut m = [[0.0; 2]; 2];
        for (p, lw) in r.points.iter().zip(&r.log_weights) {
            for a in 0..2 {
                for b in 0..2 {
                    m[a][b] += lw.exp() * p[a] * p[b];
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                assert!((m[a][b] - cov.get(a, b)).abs() < 1e-12);
            }
        }
        let singular = GaussianRule::new(&SymMatrix::diag(&[0.0, 2.0]), 12);
        assert_eq!(singular.points.len(), 12);
        assert!(singular.points.iter().all(|p| p[0] == 0.0));
        let zero = GaussianRule::new(&SymMatrix::zeros(2), 12);
        assert_eq!(zero.points.len(), 1);
    }

    #[test]
    fn spline_reproduces_cubic_interior_accuracy() {
        let f = |x: f64| (1.3 * x).sin();
        let n = 257;
        let h = 16.0 / (n - 1) as f64;
        let s = Spline1d::new(-8.0, h, (0..n).map(|i| f(-8.0 + i as f64 * h)).collect());
        for k in 0..100 {
            let x = -4.0 + 8.0 * k as f64 / 100.0 + 0.013;
            assert!((s.eval(x) - f(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn bicubic_interpolates_smooth_function() {
        let f = |x: f64, y: f64| (0.5 * x).sin() * (0.3 * y).cos() + 0.1 * x * y;
        let n = 65;
        let h = 12.0 / (n - 1) as f64;
        let mut vals = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                vals[i * n + j] = f(-6.0 + i as f64 * h, -6.0 + j as f64 * h);
            }
        }
        let b = Bicubic::new([-6.0, -6.0], [h, h], [n, n], &vals);
        assert!((b.eval(-6.0 + 3.0 * h, -6.0 + 7.0 * h) - f(-6.0 + 3.0 * h, -6.0 + 7.0 * h)).abs() < 1e-14);
        for k in 0..50 {
            let x = -3.0 + 6.0 * k as f64 / 50.0 + 0.01;
            let y = 2.5 - 5.0 * k as f64 / 50.0;
            assert!((b.eval(x, y) - f(x, y)).abs() < 1e-5, "{x} {y}");
        }
    }
}
