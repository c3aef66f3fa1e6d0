//! Multinomial-logit (MNL) contextual bandit laboratory.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: the MNL choice model, its negative log-likelihood and derivatives.
//! - [`linalg`]: small dense PSD matrices, Mahalanobis norms and metric projections.
//! - [`estimation`]: the restricted-space online mirror descent estimator, confidence
//!   radii, and the norm-constrained MLE with its likelihood-ratio confidence set.
//! - [`assortment`]: revenue-maximizing assortment selection under a cardinality cap.
//! - [`bandit`]: the synthetic environment, regret accounting and the agents.
//! - [`harness`]: replicated experiments, CSV/manifest output and the verification suite.
//!
//! Replicas run on a rayon pool when the `parallel` feature is enabled (the default);
//! without it the same code path runs sequentially and produces identical output.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::field_reassign_with_default)]

pub mod assortment;
pub mod bandit;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod model;

pub use error::{MnlError, Result};
