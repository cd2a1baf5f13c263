//! Convex calculus for the interaction `ξ` on the PSD cone.

pub mod certify;
pub mod conjugate;
pub mod model;

pub use certify::{check_model, CertificationReport, CheckOutcome, Witness};
pub use conjugate::{conjugate_with, conjugate_xi, grad_conjugate, search_radius, ConjugateOptions, ConjugateResult};
pub use model::{Monomial, XiKind, XiModel, XiModelSpec};
