//! Numerics for the enriched free energy of convex vector spin glasses.
//!
//! The crate evaluates the one-body functional `ψ` of a matrix-valued path
//! through Poisson–Dirichlet cascades, solves the Parisi and Hopf–Lax
//! variational problems over step paths, and carries the convex calculus
//! (`ξ`, `θ`, `ξ*`) on the cone of positive semi-definite matrices that
//! both formulas rely on.

pub mod cascade;
pub mod cli;
pub mod cone;
pub mod config;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod path;
pub mod quadrature;
pub mod rng;
pub mod suite;
pub mod transport;
pub mod variational;

pub use error::{Error, Result};
pub use linalg::{PsdMatrix, SymMatrix};
