//! Uncertainty quantification for frame-to-frame cell tracking by linear
//! assignment.
//!
//! The crate computes MAP assignments between two frames, posterior edge
//! probabilities (exact, top-K importance weighted, feature-perturbation
//! ensembles), per-daughter mother distributions with temperature scaling,
//! and calibration / sparsification metrics.

pub mod bayes;
pub mod costs;
pub mod dbmc;
pub mod error;
pub mod eval;
pub mod lap;
pub mod model;
pub mod perturb;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
