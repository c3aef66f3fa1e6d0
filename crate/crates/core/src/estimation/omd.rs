//! Restricted-space online mirror descent and its confidence radii.

use nalgebra::DVector;

use crate::error::{MnlError, Result};
use crate::linalg::{Ellipsoid, PsdMatrix, SearchSpace};
use crate::model::{Observation, RoundContext};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Step sizes, regularizers and the failure level for one confidence family.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub dim: usize,
    pub bound: f64,
    pub delta: f64,
    /// Planning step size `η = 1`.
    pub eta: f64,
    /// Warm-up step size `η_w = 1/2 + 3√2·B`.
    pub eta_warmup: f64,
    /// Planning regularizer `λ = 144·d`.
    pub lambda: f64,
    /// Warm-up regularizer `λ_w = max{12√2·η_w·B, 144·η_w·d, 2}`.
    pub lambda_warmup: f64,
}

impl HyperParams {
    pub fn new(dim: usize, bound: f64, delta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(MnlError::Domain("dimension must be >= 1".into()));
        }
        if !(bound > 0.0) {
            return Err(MnlError::Domain(format!("norm bound {bound}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(MnlError::Domain(format!("delta {delta} outside (0, 1]")));
        }
        let d = dim as f64;
        let eta_warmup = 0.5 + 3.0 * SQRT_2 * bound;
        let lambda_warmup = (12.0 * SQRT_2 * eta_warmup * bound)
            .max(144.0 * eta_warmup * d)
            .max(2.0);
        Ok(Self {
            dim,
            bound,
            delta,
            eta: 1.0,
            eta_warmup,
            lambda: 144.0 * d,
            lambda_warmup,
        })
    }
}

fn radius(eta: f64, lambda: f64, t: usize, hp: &HyperParams) -> f64 {
    let d = hp.dim as f64;
    let b = hp.bound;
    (2.0 * eta * (1.0 / hp.delta).ln()
        + 4.0 * 6f64.sqrt() * eta * eta * d * ((t + 2) as f64).ln()
        + 4.0 * b * b * lambda)
        .sqrt()
}

/// Warm-up radius `ζ_t(δ) = √(2η_w log(1/δ) + 4√6 η_w² d log(t+2) + 4B²λ_w)`.
pub fn zeta_radius(t: usize, hp: &HyperParams) -> f64 {
    radius(hp.eta_warmup, hp.lambda_warmup, t, hp)
}

/// Planning radius `β_t(δ) = √(2η log(1/δ) + 4√6 η² d log(t+2) + 4B²λ)`.
pub fn beta_radius(t: usize, hp: &HyperParams) -> f64 {
    radius(hp.eta, hp.lambda, t, hp)
}

/// Warm-up threshold `τ_t = 6√2·ζ_t(δ)`.
pub fn tau_threshold(t: usize, hp: &HyperParams) -> f64 {
    6.0 * SQRT_2 * zeta_radius(t, hp)
}

/// Estimate `w_t`, accumulated Hessians `H_t` and the step size of one
/// online mirror descent stream.
#[derive(Clone, Debug)]
pub struct OmdState {
    pub w: DVector<f64>,
    pub h: PsdMatrix,
    pub eta: f64,
    pub lambda: f64,
    pub updates: usize,
}

impl OmdState {
    /// `w₁ = 0`, `H₁ = λI`.
    pub fn new(dim: usize, eta: f64, lambda: f64) -> Self {
        Self {
            w: DVector::zeros(dim),
            h: PsdMatrix::scaled_identity(dim, lambda),
            eta,
            lambda,
            updates: 0,
        }
    }
}

/// One restricted-space OMD update on the observed round.
///
/// 1. `w' = argmin_{w∈W} ‖w − w_t‖_{H_t}`
/// 2. `H̃ = H_t + η∇²ℓ(w')`
/// 3. `w″ = w' − η H̃⁻¹ ∇ℓ(w')`
/// 4. `w_{t+1} = argmin_{w∈W} ‖w − w″‖_{H̃}`
/// 5. `H_{t+1} = H_t + ∇²ℓ(w_{t+1})`
pub fn rs_omd_step(state: &OmdState, space: &SearchSpace, obs: &Observation) -> Result<OmdState> {
    if obs.dim() != state.w.len() {
        return Err(MnlError::DimensionMismatch {
            expected: state.w.len(),
            got: obs.dim(),
        });
    }
    let anchor = space.project(&state.w, &state.h)?;
    let h_tilde = state.h.add_scaled(&obs.hessian(anchor.as_slice()), state.eta)?;
    let grad = obs.gradient(anchor.as_slice());
    let step = h_tilde.solve(&grad)?;
    let unconstrained = &anchor - step * state.eta;
    let w = space.project(&unconstrained, &h_tilde)?;
    let h = state.h.accumulate(&obs.hessian(w.as_slice()))?;
    Ok(OmdState {
        w,
        h,
        eta: state.eta,
        lambda: state.lambda,
        updates: state.updates + 1,
    })
}

/// Result of the warm-up leverage test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarmupCheck {
    pub triggered: bool,
    /// Item with the largest leverage `‖x‖²_{H_w⁻¹}` (lowest index on ties).
    pub item: usize,
    pub leverage: f64,
}

/// Triggers when `max_x ‖x‖²_{H_w⁻¹} ≥ 1/τ²`.
pub fn warmup_criterion(ctx: &RoundContext, h_warm: &PsdMatrix, tau: f64) -> Result<WarmupCheck> {
    if h_warm.dim() != ctx.dim() {
        return Err(MnlError::DimensionMismatch {
            expected: h_warm.dim(),
            got: ctx.dim(),
        });
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..ctx.n_items() {
        let lev = h_warm.inv_quadratic(ctx.feature(i))?;
        if lev > best.0 {
            best = (lev, i);
        }
    }
    Ok(WarmupCheck {
        triggered: best.0 >= 1.0 / (tau * tau),
        item: best.1,
        leverage: best.0,
    })
}

/// `{w : ‖w − w_t‖_{H_t} ≤ radius}` around the state's estimate.
pub fn confidence_ellipsoid(state: &OmdState, radius: f64) -> Result<Ellipsoid> {
    Ellipsoid::new(state.w.clone(), state.h.clone(), radius)
}
