//! Projected BFGS ascent with finite-difference gradients.

use rayon::prelude::*;

use crate::error::Result;

#[derive(Clone, Debug)]
pub(crate) struct AscentOptions {
    pub max_iter: usize,
    /// Stop once an accepted step raises the value by less than `value_tol·(1 + |f|)`
    /// three times in a row.
    pub value_tol: f64,
    pub grad_tol: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Ascent {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<f64>,
}

/// Central differences of `f`, one coordinate per task.
pub(crate) fn fd_gradient(f: &(dyn Fn(&[f64]) -> Result<f64> + Sync), x: &[f64], step: f64) -> Result<Vec<f64>> {
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = step * (1.0 + x[i].abs());
            let mut a = x.to_vec();
            a[i] += h;
            let mut b = x.to_vec();
            b[i] -= h;
            Ok((f(&a)? - f(&b)?) / (2.0 * h))
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f` over the image of `project`, starting from `x0`.
///
/// `grad` returns the gradient at a point already passed through `project`.
/// The inverse-Hessian estimate is reset whenever the projection moves a
/// trial point or the BFGS direction stops being an ascent direction.
pub(crate) fn maximize(
    f: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    grad: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync),
    project: &dyn Fn(&mut [f64]) -> bool,
    x0: &[f64],
    opts: &AscentOptions,
) -> Result<Ascent> {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x)?;
    let mut g = grad(&x)?;
    let identity = |n: usize| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    let mut fresh = true;
    let mut quiet = 0;
    let mut trajectory = vec![fx];
    let mut iterations = 0;
    let mut converged = false;
    let mut first_step = true;
    while iterations < opts.max_iter {
        iterations += 1;
        if dot(&g, &g).sqrt() <= opts.grad_tol {
            converged = true;
            break;
        }
        let mut d: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &g)).collect();
        if dot(&d, &g) <= 0.0 {
            h = identity(n);
            fresh = true;
            d = g.clone();
        }
        let mut alpha = if first_step {
            (0.1 / dot(&d, &d).sqrt().max(1e-300)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let moved = project(&mut trial);
            let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let gain = dot(&g, &s);
            if gain <= 0.0 {
                alpha *= 0.5;
                continue;
            }
            let ft = f(&trial)?;
            if ft >= fx + 1e-4 * gain {
                accepted = Some((trial, ft, s, moved));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft, s, moved)) = accepted else {
            if fresh {
                // no ascent along the gradient: stationary up to the difference noise
                converged = true;
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        first_step = false;
        let g_new = grad(&trial)?;
        let rise = ft - fx;
        x = trial;
        fx = ft;
        trajectory.push(fx);
        // curvature pair for the minimization of −f
        let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        g = g_new;
        let sy = dot(&s, &y);
        if moved {
            h = identity(n);
            fresh = true;
        } else if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        if rise <= opts.value_tol * (1.0 + fx.abs()) {
            quiet += 1;
            if quiet >= 3 {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    Ok(Ascent {
        x,
        value: fx,
        iterations,
        converged,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> AscentOptions {
        AscentOptions {
            max_iter: 500,
            value_tol: 1e-14,
            grad_tol: 1e-9,
        }
    }

    #[test]
    fn concave_quadratic() {
        let f = |x: &[f64]| -> Result<f64> { Ok(-(x[0] - 1.0).powi(2) - 3.0 * (x[1] + 0.5).powi(2) - x[0] * x[1]) };
        let g = |x: &[f64]| fd_gradient(&f, x, 1e-5);
        let r = maximize(&f, &g, &|_| false, &[0.0, 0.0], &opts()).unwrap();
        // stationarity: 2(x−1) + y = 0, 6(y+0.5) + x = 0
        let (x, y) = (r.x[0], r.x[1]);
        assert!((2.0 * (x - 1.0) + y).abs() < 1e-6 && (6.0 * (y + 0.5) + x).abs() < 1e-6, "{:?}", r.x);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| -> Result<f64> { Ok(-(1.0 - x[0]).powi(2) - 100.0 * (x[1] - x[0] * x[0]).powi(2)) };
        let g = |x: &[f64]| fd_gradient(&f, x, 1e-6);
        let r = maximize(&f, &g, &|_| false, &[-1.2, 1.0], &opts()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn projection_onto_a_ball() {
        // max x + y on the unit disk is at (1,1)/√2
        let f = |x: &[f64]| -> Result<f64> { Ok(x[0] + x[1]) };
        let g = |x: &[f64]| fd_gradient(&f, x, 1e-6);
        let proj = |x: &mut [f64]| {
            let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if n > 1.0 {
                x[0] /= n;
                x[1] /= n;
                true
            } else {
                false
            }
        };
        let r = maximize(&f, &g, &proj, &[0.0, 0.0], &opts()).unwrap();
        assert!((r.value - 2f64.sqrt()).abs() < 1e-6, "{:?}", r);
        assert!(r.trajectory.windows(2).all(|w| w[1] >= w[0]));
    }
}
