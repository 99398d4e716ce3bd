//! Machine unlearning in a low-dimensional feature subspace.
//!
//! Given covariance summaries of the features of a *forgetting* set and of a
//! *remaining* set, the toolkit learns an orthonormal frame `U ∈ St(d, s)`
//! whose projector `UUᵀ` keeps the remaining-set variance and discards the
//! forgetting-set variance. The projector is inserted between a frozen
//! feature extractor and its linear head, or folded into the head directly.

pub mod analysis;
pub mod dataio;
pub mod error;
pub mod evaluator;
pub mod matcore;
pub mod objective;
pub mod optimizer;
pub mod stiefel;

pub use error::{Error, Result};
