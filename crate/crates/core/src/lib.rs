//! Differentially private linear and logistic regression from privately
//! released pairwise marginals.
//!
//! The pipeline is:
//!
//! 1. [`dataset`]: load a discrete table against a declared [`dataset::Domain`].
//! 2. [`mechanism`]: privately release every pairwise marginal
//!    (Gaussian all-pairs or the adaptive AIM-lite select/measure loop),
//!    accounted in zCDP by [`privacy`].
//! 3. [`ssp`]: rebuild `Z^T Z` for the encoded records from those tables
//!    (post-processing only) and solve for least squares or for the
//!    quadratic Chebyshev surrogate of the logistic log-likelihood.
//!
//! [`baselines`] holds the data-independent comparators (AdaSSP and
//! objective perturbation) and [`bench`] the experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod dataset;
pub mod encoding;
mod error;
pub mod linalg;
pub mod marginals;
pub mod mechanism;
pub mod privacy;
pub mod ssp;

pub use error::{Error, Result};
