//! OFU-MNL++: one-pass online estimation with an adaptive warm-up.
//!
//! Each round first checks whether some item is still poorly explored under
//! the warm-up Hessian. If so, that item is offered alone and only the
//! warm-up estimator learns from the response, which also shrinks the
//! confidence ellipsoid `W(δ)` used as the planning search space. Otherwise
//! the agent plays the revenue-maximizing assortment under optimistic
//! utilities and updates the planning estimator inside `W(δ)`.

use rand_chacha::ChaCha8Rng;

use super::{Agent, Decision, Phase};
use crate::assortment::best_assortment;
use crate::error::Result;
use crate::estimation::omd::{
    beta_radius, confidence_ellipsoid, rs_omd_step, tau_threshold, warmup_criterion, zeta_radius, HyperParams,
    OmdState,
};
use crate::linalg::{Ellipsoid, SearchSpace};
use crate::model::{dot, Assortment, ChoiceOutcome, Observation, RoundContext};

#[derive(Clone, Debug)]
pub struct OfuMnlPlusPlus {
    name: String,
    hp: HyperParams,
    max_size: usize,
    tau_multiplier: f64,
    beta_override: Option<f64>,
    warm: OmdState,
    plan: OmdState,
    warm_set: Option<Ellipsoid>,
    t: usize,
    phase: Phase,
}

impl OfuMnlPlusPlus {
    /// `delta` is the overall failure level; each of the two confidence
    /// families gets `delta/2`.
    pub fn new(dim: usize, bound: f64, delta: f64, max_size: usize, tau_multiplier: f64) -> Result<Self> {
        let hp = HyperParams::new(dim, bound, delta / 2.0)?;
        Ok(Self {
            name: "ofu-mnl++".into(),
            warm: OmdState::new(dim, hp.eta_warmup, hp.lambda_warmup),
            plan: OmdState::new(dim, hp.eta, hp.lambda),
            hp,
            max_size,
            tau_multiplier,
            beta_override: None,
            warm_set: None,
            t: 0,
            phase: Phase::Planning,
        })
    }

    /// Replaces `β_t(δ)` by a fixed radius.
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta_override = Some(beta);
        self
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn planning_state(&self) -> &OmdState {
        &self.plan
    }

    pub fn warmup_state(&self) -> &OmdState {
        &self.warm
    }

    /// `W_t(δ)`; `None` until the first warm-up round, when the full ball is used.
    pub fn warmup_set(&self) -> Option<&Ellipsoid> {
        self.warm_set.as_ref()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta_override.unwrap_or_else(|| beta_radius(t, &self.hp))
    }

    pub fn tau(&self, t: usize) -> f64 {
        self.tau_multiplier * tau_threshold(t, &self.hp)
    }

    /// Optimistic utilities `x·w_t + β_t‖x‖_{H_t⁻¹}` for every item.
    pub fn optimistic_utilities(&self, t: usize, ctx: &RoundContext) -> Result<Vec<f64>> {
        let beta = self.beta(t);
        let w = self.plan.w.as_slice();
        (0..ctx.n_items())
            .map(|i| {
                let x = ctx.feature(i);
                let bonus = if beta == 0.0 { 0.0 } else { beta * self.plan.h.inv_mahalanobis(x)? };
                Ok(dot(x, w) + bonus)
            })
            .collect()
    }
}

impl Agent for OfuMnlPlusPlus {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, t: usize, ctx: &RoundContext, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        self.t = t;
        let check = warmup_criterion(ctx, &self.warm.h, self.tau(t))?;
        if check.triggered {
            self.phase = Phase::Warmup;
            return Ok(Decision {
                assortment: Assortment::singleton(check.item),
                phase: Phase::Warmup,
            });
        }
        self.phase = Phase::Planning;
        let u = self.optimistic_utilities(t, ctx)?;
        let (assortment, _) = best_assortment(&u, ctx.rewards(), self.max_size)?;
        Ok(Decision {
            assortment,
            phase: Phase::Planning,
        })
    }

    fn observe(&mut self, ctx: &RoundContext, offered: &Assortment, outcome: &ChoiceOutcome) -> Result<()> {
        let obs = Observation::new(ctx, offered, outcome)?;
        match self.phase {
            Phase::Warmup => {
                let ball = SearchSpace::Ball { radius: self.hp.bound };
                self.warm = rs_omd_step(&self.warm, &ball, &obs)?;
                let radius = zeta_radius(self.t + 1, &self.hp);
                self.warm_set = Some(confidence_ellipsoid(&self.warm, radius)?);
            }
            Phase::Planning => {
                let space = match &self.warm_set {
                    Some(e) => SearchSpace::Ellipsoid(e.clone()),
                    None => SearchSpace::Ball { radius: self.hp.bound },
                };
                self.plan = rs_omd_step(&self.plan, &space, &obs)?;
            }
        }
        Ok(())
    }
}
