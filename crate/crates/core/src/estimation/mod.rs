//! Parameter estimation: the one-pass online mirror descent estimator with
//! its ellipsoidal confidence sets, and the norm-constrained MLE with its
//! likelihood-ratio confidence set.

pub mod mle;
pub mod omd;

pub use mle::{mle_fit, mle_optimistic_utility, mle_radius_sq, History, MleState};
pub use omd::{
    beta_radius, confidence_ellipsoid, rs_omd_step, tau_threshold, warmup_criterion, zeta_radius, HyperParams,
    OmdState, WarmupCheck,
};
