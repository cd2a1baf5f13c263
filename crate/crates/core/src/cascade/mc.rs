//! Monte Carlo over truncated cascades: `ψ`, the finite-`N` free energy and
//! replica overlaps.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_law, mean_stderr, CascadeSpec, SpinLaw, TopLevel};
use crate::cone::XiModel;
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::path::StepPath;
use crate::rng::{normal, stream};

/// Largest number of spin configurations enumerated exactly.
pub const MAX_CONFIGS: usize = 65_536;
/// Largest covariance matrix factorized for the disorder.
pub const MAX_COVARIANCE: usize = 2_048;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl McEstimate {
    fn from_samples(xs: &[f64], seed: u64) -> Self {
        let (mean, stderr) = mean_stderr(xs);
        Self {
            mean,
            stderr,
            n_samples: xs.len(),
            seed,
        }
    }
}

/// One cascade realization: normalized log-weights of the leaves in
/// lexicographic order and, per leaf, `copies` fields in `ℝ^D` laid out flat.
#[derive(Clone, Debug)]
pub struct CascadeDraw {
    pub log_weights: Vec<f64>,
    pub fields: Vec<f64>,
    pub copies: usize,
    pub dim: usize,
}

impl CascadeDraw {
    pub fn leaves(&self) -> usize {
        self.log_weights.len()
    }

    /// Field of copy `i` at leaf `alpha`.
    pub fn field(&self, alpha: usize, i: usize) -> &[f64] {
        let w = self.copies * self.dim;
        let s = alpha * w + i * self.dim;
        &self.fields[s..s + self.dim]
    }
}

fn log_weights(spec: &CascadeSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut logs = vec![0.0];
    for &zeta in &spec.zetas {
        let mut next = Vec::with_capacity(logs.len() * spec.m);
        for &parent in &logs {
            let mut gamma = 0.0;
            for _ in 0..spec.m {
                let e: f64 = rng.sample(Exp1);
                gamma += e;
                next.push(parent - gamma.ln() / zeta);
            }
        }
        logs = next;
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    for l in &mut logs {
        *l -= lse;
    }
    logs
}

/// Normalized weights `v_α` of the kept leaves, lexicographic in `α`.
pub fn sample_cascade_weights(spec: &CascadeSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(log_weights(spec, rng).into_iter().map(f64::exp).collect())
}

/// Square roots of `q_0, q_1 − q_0, ..., q_K − q_{K−1}`.
fn increment_factors(q: &StepPath) -> Result<Vec<DMatrix<f64>>> {
    let values = q.values();
    (0..values.len())
        .map(|k| {
            let inc = if k == 0 {
                values[0].clone()
            } else {
                &values[k] - &values[k - 1]
            };
            let min = inc.min_eig();
            if min < -inc.psd_tol() {
                return Err(Error::NonMonotone { index: k, min_eig: min });
            }
            Ok(psd_sqrt(&inc).matrix().clone())
        })
        .collect()
}

fn fields(spec: &CascadeSpec, factors: &[DMatrix<f64>], copies: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = factors[0].nrows();
    let width = copies * d;
    let mut z = vec![0.0; d];
    let mut add = |target: &mut [f64], a: &DMatrix<f64>, rng: &mut ChaCha8Rng| {
        for c in 0..copies {
            for v in z.iter_mut() {
                *v = normal(rng);
            }
            for r in 0..d {
                let mut s = 0.0;
                for (col, zc) in z.iter().enumerate() {
                    s += a[(r, col)] * zc;
                }
                target[c * d + r] += s;
            }
        }
    };
    let mut cur = vec![0.0; width];
    add(&mut cur, &factors[0], rng);
    for a in &factors[1..] {
        let parents = cur.len() / width;
        let mut next = Vec::with_capacity(parents * spec.m * width);
        for p in 0..parents {
            for _ in 0..spec.m {
                let start = next.len();
                next.extend_from_slice(&cur[p * width..(p + 1) * width]);
                add(&mut next[start..], a, rng);
            }
        }
        cur = next;
    }
    cur
}

/// Fields `w^q(α) = Σ_k (q_k − q_{k−1})^{1/2} z_{α|k}` at every leaf, `copies`
/// independent copies per leaf, flat with stride `copies·D`.
pub fn sample_field(spec: &CascadeSpec, q: &StepPath, copies: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    spec.check_path(q)?;
    let factors = increment_factors(q)?;
    Ok(fields(spec, &factors, copies, rng))
}

fn draw(spec: &CascadeSpec, factors: &[DMatrix<f64>], copies: usize, rng: &mut ChaCha8Rng) -> CascadeDraw {
    let log_weights = log_weights(spec, rng);
    let fields = fields(spec, factors, copies, rng);
    CascadeDraw {
        log_weights,
        fields,
        copies,
        dim: factors[0].nrows(),
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::OutOfRange("at least one sample is required".into()));
    }
    Ok(())
}

/// `ψ(q) = −E log Σ_α v_α Σ_σ P₁(σ) exp(√2 w^q(α)·σ − σ·q_K σ)`.
pub fn psi_mc(q: &StepPath, law: &SpinLaw, spec: &CascadeSpec, n_samples: usize) -> Result<McEstimate> {
    check_samples(n_samples)?;
    check_law(q, law)?;
    spec.check_path(q)?;
    if q.is_zero() {
        return Ok(McEstimate::from_samples(&vec![0.0; n_samples], spec.seed));
    }
    let factors = increment_factors(q)?;
    let top = TopLevel::new(&q.values()[q.levels()], law);
    let xs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, "psi_mc", i as u64);
            let c = draw(spec, &factors, 1, &mut rng);
            let vals: Vec<f64> = (0..c.leaves())
                .map(|a| c.log_weights[a] + top.eval(c.field(a, 0)))
                .collect();
            -lse(&vals)
        })
        .collect();
    Ok(McEstimate::from_samples(&xs, spec.seed))
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exactly enumerated system of `N` spins with its Gaussian disorder.
struct System {
    n: usize,
    d: usize,
    /// atom index per spin, configuration-major
    configs: Vec<usize>,
    atoms: Vec<Vec<f64>>,
    /// `log P(σ) − N t ξ(σσ*/N) − Σ_i σ_i·q_K σ_i`
    base: Vec<f64>,
    /// `√(2t)` times a factor `L` with `L Lᵀ = C`, or `None` when `t = 0`
    disorder: Option<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
}

impl System {
    fn new(n: usize, t: f64, q: &StepPath, model: &XiModel, law: &SpinLaw, spec: &CascadeSpec) -> Result<Self> {
        if n == 0 {
            return Err(Error::OutOfRange("N must be at least 1".into()));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::OutOfRange(format!("t = {t} must be finite and nonnegative")));
        }
        check_law(q, law)?;
        if model.dim() != law.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: law.dim(),
            });
        }
        if !model.is_admissible() {
            return Err(Error::Uncertified);
        }
        spec.check_path(q)?;
        let d = law.dim();
        let atoms: Vec<Vec<f64>> = law.atoms().to_vec();
        let l = atoms.len();
        let n_conf = (l as f64).powi(n as i32);
        if n_conf > MAX_CONFIGS as f64 {
            return Err(Error::EnumerationTooLarge {
                configs: n_conf.min(usize::MAX as f64) as usize,
                limit: MAX_CONFIGS,
            });
        }
        let n_conf = n_conf as usize;
        if t > 0.0 && n_conf > MAX_COVARIANCE {
            return Err(Error::EnumerationTooLarge {
                configs: n_conf,
                limit: MAX_COVARIANCE,
            });
        }
        let mut configs = Vec::with_capacity(n_conf * n);
        for c in 0..n_conf {
            let mut r = c;
            for _ in 0..n {
                configs.push(r % l);
                r /= l;
            }
        }
        let q_top = &q.values()[q.levels()];
        let self_energy: Vec<f64> = atoms
            .iter()
            .map(|a| {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += a[i] * q_top.get(i, j) * a[j];
                    }
                }
                s
            })
            .collect();
        let overlap = |a: usize, b: usize| {
            let mut r = DMatrix::zeros(d, d);
            for i in 0..n {
                let (x, y) = (&atoms[configs[a * n + i]], &atoms[configs[b * n + i]]);
                for k in 0..d {
                    for m in 0..d {
                        r[(k, m)] += x[k] * y[m];
                    }
                }
            }
            r / n as f64
        };
        let nf = n as f64;
        let mut base = Vec::with_capacity(n_conf);
        for c in 0..n_conf {
            let mut v = 0.0;
            for i in 0..n {
                let a = configs[c * n + i];
                v += law.weights()[a].ln() - self_energy[a];
            }
            if t > 0.0 {
                v -= nf * t * model.eval_general(&overlap(c, c))?;
            }
            base.push(v);
        }
        let disorder = if t > 0.0 {
            let mut cov = DMatrix::zeros(n_conf, n_conf);
            for a in 0..n_conf {
                for b in a..n_conf {
                    let x = nf * model.eval_general(&overlap(a, b))?;
                    cov[(a, b)] = x;
                    cov[(b, a)] = x;
                }
            }
            let eig = cov.symmetric_eigen();
            let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -1e-10 * (1.0 + scale) {
                return Err(Error::CovarianceNotPsd { min_eig: min });
            }
            let sqrt = DVector::from_iterator(
                n_conf,
                eig.eigenvalues.iter().map(|v| (2.0 * t * v.max(0.0)).sqrt()),
            );
            let mut f = eig.eigenvectors;
            for (j, s) in sqrt.iter().enumerate() {
                f.column_mut(j).scale_mut(*s);
            }
            Some(f)
        } else {
            None
        };
        Ok(Self {
            n,
            d,
            configs,
            atoms,
            base,
            disorder,
            factors: increment_factors(q)?,
        })
    }

    fn n_conf(&self) -> usize {
        self.base.len()
    }

    /// Configuration energies `base + √(2t) H` for one disorder draw.
    fn energies(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut e = self.base.clone();
        if let Some(f) = &self.disorder {
            let z = DVector::from_iterator(f.ncols(), (0..f.ncols()).map(|_| normal(rng)));
            let h = f * z;
            for (e, h) in e.iter_mut().zip(h.iter()) {
                *e += h;
            }
        }
        e
    }

    /// Log Gibbs weight of `(α, σ)` for every configuration at leaf `alpha`.
    fn leaf_terms(&self, c: &CascadeDraw, energies: &[f64], alpha: usize, dots: &mut Vec<f64>, out: &mut Vec<f64>) {
        let l = self.atoms.len();
        let sqrt2 = std::f64::consts::SQRT_2;
        dots.clear();
        for i in 0..self.n {
            let w = c.field(alpha, i);
            for a in &self.atoms {
                dots.push(sqrt2 * a.iter().zip(w).map(|(x, y)| x * y).sum::<f64>());
            }
        }
        out.clear();
        let lw = c.log_weights[alpha];
        for (cfg, e) in self.configs.chunks_exact(self.n).zip(energies) {
            let mut v = lw + e;
            for (i, &a) in cfg.iter().enumerate() {
                v += dots[i * l + a];
            }
            out.push(v);
        }
    }

    fn overlap(&self, a: usize, b: usize) -> Vec<f64> {
        let d = self.d;
        let mut r = vec![0.0; d * d];
        for i in 0..self.n {
            let (x, y) = (
                &self.atoms[self.configs[a * self.n + i]],
                &self.atoms[self.configs[b * self.n + i]],
            );
            for k in 0..d {
                for m in 0..d {
                    r[k * d + m] += x[k] * y[m];
                }
            }
        }
        r.iter().map(|v| v / self.n as f64).collect()
    }
}

/// `F_N(t, q) = −N⁻¹ E log Σ_α v_α Σ_σ P(σ) exp(√(2t) H_N(σ) − N t ξ(σσ*/N) + Σ_i (√2 w_i(α)·σ_i − σ_i·q_K σ_i))`.
pub fn mc_free_energy(
    n: usize,
    t: f64,
    q: &StepPath,
    model: &XiModel,
    law: &SpinLaw,
    spec: &CascadeSpec,
    n_samples: usize,
) -> Result<McEstimate> {
    check_samples(n_samples)?;
    let sys = System::new(n, t, q, model, law, spec)?;
    let xs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(dots, terms), i| {
                let mut rng = stream(spec.seed, "free_energy", i as u64);
                let energies = sys.energies(&mut rng);
                let c = draw(spec, &sys.factors, n, &mut rng);
                let per_leaf: Vec<f64> = (0..c.leaves())
                    .map(|a| {
                        sys.leaf_terms(&c, &energies, a, dots, terms);
                        lse(terms)
                    })
                    .collect();
                -lse(&per_leaf) / n as f64
            },
        )
        .collect();
    Ok(McEstimate::from_samples(&xs, spec.seed))
}

/// Overlaps `στ*/N` of two replicas drawn from the cascade-augmented Gibbs
/// measure, one pair per disorder draw; each row holds the `D²` entries row-major.
pub fn overlap_samples(
    n: usize,
    t: f64,
    q: &StepPath,
    model: &XiModel,
    law: &SpinLaw,
    spec: &CascadeSpec,
    n_draws: usize,
) -> Result<Vec<Vec<f64>>> {
    check_samples(n_draws)?;
    let sys = System::new(n, t, q, model, law, spec)?;
    let n_conf = sys.n_conf();
    Ok((0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, "overlap", i as u64);
            let energies = sys.energies(&mut rng);
            let c = draw(spec, &sys.factors, n, &mut rng);
            let (mut dots, mut terms) = (Vec::new(), Vec::new());
            let mut all = Vec::with_capacity(c.leaves() * n_conf);
            for a in 0..c.leaves() {
                sys.leaf_terms(&c, &energies, a, &mut dots, &mut terms);
                all.extend_from_slice(&terms);
            }
            let m = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut cum = Vec::with_capacity(all.len());
            let mut acc = 0.0;
            for v in &all {
                acc += (v - m).exp();
                cum.push(acc);
            }
            let pick = |rng: &mut ChaCha8Rng| {
                let u = rng.gen::<f64>() * acc;
                cum.partition_point(|&c| c <= u).min(cum.len() - 1) % n_conf
            };
            let a = pick(&mut rng);
            let b = pick(&mut rng);
            sys.overlap(a, b)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{psi_grid, PsiGridConfig};
    use crate::linalg::SymMatrix;

    fn within(a: &McEstimate, b: f64, k: f64) {
        assert!((a.mean - b).abs() <= k * a.stderr, "{a:?} vs {b}");
    }

    #[test]
    fn depth_zero_has_one_unit_leaf() {
        let spec = CascadeSpec::new(vec![], 10, 0).unwrap();
        let w = sample_cascade_weights(&spec, &mut stream(0, "t", 0)).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn weights_are_normalized_and_sorted_within_nodes() {
        let spec = CascadeSpec::new(vec![0.3, 0.6], 20, 1).unwrap();
        let w = sample_cascade_weights(&spec, &mut stream(1, "t", 0)).unwrap();
        assert_eq!(w.len(), 400);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for node in w.chunks(20) {
            assert!(node.windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn mean_sum_of_squared_weights() {
        // E Σ v² = 1 − ζ for the Poisson–Dirichlet law PD(ζ, 0)
        let spec = CascadeSpec::new(vec![0.5], 100, 7).unwrap();
        let xs: Vec<f64> = (0..10_000)
            .map(|i| {
                let w = sample_cascade_weights(&spec, &mut stream(7, "pd", i)).unwrap();
                w.iter().map(|v| v * v).sum()
            })
            .collect();
        let (m, se) = mean_stderr(&xs);
        assert!((m - 0.5).abs() <= 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn zero_path_gives_zero_fields() {
        let spec = CascadeSpec::new(vec![0.5], 5, 0).unwrap();
        let q = StepPath::new(vec![0.5], vec![SymMatrix::zeros(2), SymMatrix::zeros(2)]);
        // equal consecutive values merge, so the path has no breakpoint
        let q = q.unwrap();
        assert_eq!(q.levels(), 0);
        let spec0 = CascadeSpec::new(vec![], 5, 0).unwrap();
        let f = sample_field(&spec0, &q, 3, &mut stream(0, "f", 0)).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
        assert!(sample_field(&spec, &q, 1, &mut stream(0, "f", 0)).is_err());
    }

    #[test]
    fn root_field_has_identity_covariance() {
        let spec = CascadeSpec::new(vec![], 2, 0).unwrap();
        let q = StepPath::constant(SymMatrix::identity(2)).unwrap();
        let n = 100_000;
        let mut prods = vec![Vec::with_capacity(n); 4];
        for i in 0..n {
            let f = sample_field(&spec, &q, 1, &mut stream(3, "cov", i as u64)).unwrap();
            for k in 0..2 {
                for m in 0..2 {
                    prods[k * 2 + m].push(f[k] * f[m]);
                }
            }
        }
        for k in 0..2 {
            for m in 0..2 {
                let (mean, se) = mean_stderr(&prods[k * 2 + m]);
                let expect = if k == m { 1.0 } else { 0.0 };
                assert!((mean - expect).abs() <= 3.0 * se, "{k}{m}: {mean} ± {se}");
            }
        }
    }

    #[test]
    fn siblings_share_the_first_level_covariance() {
        let q = StepPath::new(
            vec![0.3, 0.6],
            vec![SymMatrix::scalar(0.2), SymMatrix::scalar(0.7), SymMatrix::scalar(1.5)],
        )
        .unwrap();
        let spec = CascadeSpec::for_path(&q, 2, 0).unwrap();
        let n = 50_000;
        // leaves 0 = (0,0) and 1 = (0,1) meet at depth 1
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let f = sample_field(&spec, &q, 1, &mut stream(5, "sib", i)).unwrap();
                f[0] * f[1]
            })
            .collect();
        let (m, se) = mean_stderr(&xs);
        assert!((m - 0.7).abs() <= 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn psi_mc_zero_path_is_exactly_zero() {
        let spec = CascadeSpec::new(vec![], 10, 0).unwrap();
        let e = psi_mc(&StepPath::zero(1), &SpinLaw::ising(), &spec, 100).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn psi_mc_matches_grid_on_constant_and_one_level_paths() {
        let law = SpinLaw::ising();
        let q = StepPath::constant(SymMatrix::scalar(0.5)).unwrap();
        let spec = CascadeSpec::for_path(&q, 200, 11).unwrap();
        let mc = psi_mc(&q, &law, &spec, 20_000).unwrap();
        within(&mc, psi_grid(&q, &law, &PsiGridConfig::default()).unwrap(), 3.0);

        let q = StepPath::new(vec![0.3], vec![SymMatrix::scalar(0.2), SymMatrix::scalar(0.8)]).unwrap();
        let spec = CascadeSpec::for_path(&q, 200, 12).unwrap();
        let mc = psi_mc(&q, &law, &spec, 20_000).unwrap();
        within(&mc, psi_grid(&q, &law, &PsiGridConfig::default()).unwrap(), 3.0);
    }

    #[test]
    fn estimates_are_reproducible() {
        let q = StepPath::new(vec![0.4], vec![SymMatrix::scalar(0.1), SymMatrix::scalar(0.6)]).unwrap();
        let spec = CascadeSpec::for_path(&q, 50, 3).unwrap();
        let a = psi_mc(&q, &SpinLaw::ising(), &spec, 200).unwrap();
        let b = psi_mc(&q, &SpinLaw::ising(), &spec, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn free_energy_at_time_zero_is_psi() {
        let law = SpinLaw::ising();
        let model = XiModel::sk(1.0);
        let q = StepPath::new(vec![0.4], vec![SymMatrix::scalar(0.1), SymMatrix::scalar(0.6)]).unwrap();
        let psi = psi_grid(&q, &law, &PsiGridConfig::default()).unwrap();
        for n in [1, 3] {
            let spec = CascadeSpec::for_path(&q, 100, 20 + n as u64).unwrap();
            let f = mc_free_energy(n, 0.0, &q, &model, &law, &spec, 5_000).unwrap();
            within(&f, psi, 3.0);
        }
    }

    #[test]
    fn free_energy_single_ising_spin() {
        // N = 1: ξ(σ²) = β² for both spins, so H does not depend on σ and
        // F = tβ² − E √(2t) H = tβ²
        let law = SpinLaw::ising();
        let model = XiModel::sk(0.8);
        let spec = CascadeSpec::new(vec![], 2, 4).unwrap();
        let t = 0.5;
        let f = mc_free_energy(1, t, &StepPath::zero(1), &model, &law, &spec, 5_000).unwrap();
        within(&f, t * model.sup_unit_ball(), 3.0);
    }

    #[test]
    fn overlaps_at_time_zero_are_centered_and_bounded() {
        let law = SpinLaw::square_corners();
        let model = XiModel::frobenius_square(2, 1.0).unwrap();
        let spec = CascadeSpec::new(vec![], 2, 9).unwrap();
        let rows = overlap_samples(3, 0.0, &StepPath::zero(2), &model, &law, &spec, 4_000).unwrap();
        for e in 0..4 {
            let xs: Vec<f64> = rows.iter().map(|r| r[e]).collect();
            let (m, se) = mean_stderr(&xs);
            assert!(m.abs() <= 3.0 * se.max(1e-12), "entry {e}: {m} ± {se}");
        }
        for r in &rows {
            assert!(r[0].abs() <= 1.0 + 1e-12 && r[3].abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn enumeration_limit() {
        let spec = CascadeSpec::new(vec![], 2, 0).unwrap();
        let err = mc_free_energy(17, 0.0, &StepPath::zero(1), &XiModel::sk(1.0), &SpinLaw::ising(), &spec, 1);
        assert!(matches!(err, Err(Error::EnumerationTooLarge { .. })));
    }
}
