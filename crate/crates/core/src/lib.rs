//! Hybrid Bayesian network structure learning.
//!
//! A skeleton phase finds candidate edges with conditional-independence
//! tests (FEDHC's forward selection with early dropping, the max-min
//! heuristic of MMHC, or PC-style pruning); a score-based hill climber then
//! orients and prunes them. Continuous data can be cleaned of multivariate
//! outliers first with the reweighted MCD estimator.

pub mod ci;
pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod robust;
pub mod score;
pub mod simgen;
pub mod skeleton;

pub use error::{Error, Result};
