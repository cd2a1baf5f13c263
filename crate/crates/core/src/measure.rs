//! Finitely supported probability measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms with nonnegative weights summing to one (renormalized on construction).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteMeasure<T> {
    atoms: Vec<T>,
    weights: Vec<f64>,
}

impl<T> DiscreteMeasure<T> {
    pub fn new(atoms: Vec<T>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { atoms, weights })
    }

    pub fn dirac(atom: T) -> Self {
        Self {
            atoms: vec![atom],
            weights: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[T] {
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

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.atoms.iter().zip(self.weights.iter().copied())
    }
}

impl<T: Clone> DiscreteMeasure<T> {
    /// `λ·other + (1−λ)·self`, atoms concatenated.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::OutOfRange(format!("mixture weight {lambda}")));
        }
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (a, w) in self.iter() {
            if (1.0 - lambda) * w > 0.0 {
                atoms.push(a.clone());
                weights.push((1.0 - lambda) * w);
            }
        }
        for (a, w) in other.iter() {
            if lambda * w > 0.0 {
                atoms.push(a.clone());
                weights.push(lambda * w);
            }
        }
        Self::new(atoms, weights)
    }
}
