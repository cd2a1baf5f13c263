//! Named random streams derived from a single root seed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::linalg::SymMatrix;

/// Independent stream `(seed, name, index)`; the same triple always gives
/// the same sequence, different triples give unrelated ones.
pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random PSD matrix `G Gᵀ` of random rank, rescaled to Frobenius norm `scale`.
pub fn random_psd(rng: &mut impl Rng, dim: usize, scale: f64) -> SymMatrix {
    let rank = rng.gen_range(1..=dim);
    let g = DMatrix::from_fn(dim, rank, |_, _| normal(rng));
    let s = SymMatrix::from_matrix(&g * g.transpose()).expect("finite");
    let n = s.norm();
    if n == 0.0 {
        return SymMatrix::zeros(dim);
    }
    s.scale(scale / n)
}

/// Random symmetric matrix with standard normal entries.
pub fn random_sym(rng: &mut impl Rng, dim: usize, scale: f64) -> SymMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| normal(rng) * scale);
    SymMatrix::from_matrix(g).expect("finite")
}
