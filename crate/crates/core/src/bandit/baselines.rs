//! MLE-based baselines: UCB-MNL, TS-MNL and the greedy plug-in policy.
//!
//! Both keep the norm-constrained MLE and the design matrix
//! `V_t = λ₀I + Σ_s Σ_{i∈S_s} x_{si}x_{si}ᵀ`, with exploration scale
//! `α₀ = c·√(d·log(t+1))`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Agent, Decision, Phase};
use crate::assortment::best_assortment;
use crate::error::Result;
use crate::estimation::mle::{mle_fit, MleState, MLE_TOL};
use crate::linalg::PsdMatrix;
use crate::model::{dot, Assortment, ChoiceOutcome, Observation, RoundContext};

/// MLE plus design matrix, shared by the baselines.
#[derive(Clone, Debug)]
pub struct LinearMle {
    mle: Option<MleState>,
    design: PsdMatrix,
    scale: f64,
}

impl LinearMle {
    pub fn new(dim: usize, bound: f64, scale: f64, lambda0: f64) -> Result<Self> {
        Ok(Self {
            mle: Some(MleState::new(dim, bound)?),
            design: PsdMatrix::scaled_identity(dim, lambda0),
            scale,
        })
    }

    pub fn state(&self) -> &MleState {
        self.mle.as_ref().expect("state present between rounds")
    }

    pub fn design(&self) -> &PsdMatrix {
        &self.design
    }

    /// `α₀ = c·√(d·log(t+1))`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.scale * (self.state().dim() as f64 * ((t + 1) as f64).ln()).sqrt()
    }

    fn refit(&mut self) -> Result<()> {
        let st = self.mle.take().expect("state present between rounds");
        self.mle = Some(mle_fit(st, MLE_TOL)?);
        Ok(())
    }

    fn record(&mut self, ctx: &RoundContext, offered: &Assortment, outcome: &ChoiceOutcome) -> Result<()> {
        let obs = Observation::new(ctx, offered, outcome)?;
        self.mle.as_mut().expect("state present between rounds").push(&obs)?;
        for &i in offered.items() {
            self.design = self.design.add_outer(ctx.feature(i), 1.0)?;
        }
        Ok(())
    }
}

/// UCB-MNL with utilities `x·ŵ + α₀‖x‖_{V⁻¹}`; with `c = 0` it is the greedy policy.
#[derive(Clone, Debug)]
pub struct UcbMnl {
    name: String,
    inner: LinearMle,
    max_size: usize,
}

impl UcbMnl {
    pub fn new(dim: usize, bound: f64, max_size: usize, c: f64, lambda0: f64) -> Result<Self> {
        Ok(Self {
            name: "ucb-mnl".into(),
            inner: LinearMle::new(dim, bound, c, lambda0)?,
            max_size,
        })
    }

    /// Plays the best assortment under the plug-in MLE utilities.
    pub fn greedy(dim: usize, bound: f64, max_size: usize, lambda0: f64) -> Result<Self> {
        let mut agent = Self::new(dim, bound, max_size, 0.0, lambda0)?;
        agent.name = "greedy".into();
        Ok(agent)
    }

    pub fn inner(&self) -> &LinearMle {
        &self.inner
    }
}

impl Agent for UcbMnl {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, t: usize, ctx: &RoundContext, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        self.inner.refit()?;
        let alpha = self.inner.alpha(t);
        let w = self.inner.state().w_hat.as_slice();
        let u = (0..ctx.n_items())
            .map(|i| {
                let x = ctx.feature(i);
                let bonus = if alpha == 0.0 { 0.0 } else { alpha * self.inner.design.inv_mahalanobis(x)? };
                Ok(dot(x, w) + bonus)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (assortment, _) = best_assortment(&u, ctx.rewards(), self.max_size)?;
        Ok(Decision {
            assortment,
            phase: Phase::Planning,
        })
    }

    fn observe(&mut self, ctx: &RoundContext, offered: &Assortment, outcome: &ChoiceOutcome) -> Result<()> {
        self.inner.record(ctx, offered, outcome)
    }
}

/// TS-MNL: one draw `w̃ ~ N(ŵ, α₀²V⁻¹)` per round, utilities `x·w̃`.
#[derive(Clone, Debug)]
pub struct TsMnl {
    name: String,
    inner: LinearMle,
    max_size: usize,
}

impl TsMnl {
    pub fn new(dim: usize, bound: f64, max_size: usize, c: f64, lambda0: f64) -> Result<Self> {
        Ok(Self {
            name: "ts-mnl".into(),
            inner: LinearMle::new(dim, bound, c, lambda0)?,
            max_size,
        })
    }

    pub fn inner(&self) -> &LinearMle {
        &self.inner
    }

    /// `ŵ + α₀ L⁻ᵀ z` with `V = LLᵀ` and `z` standard normal.
    pub fn sample_parameter(&self, t: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let d = self.inner.state().dim();
        let alpha = self.inner.alpha(t);
        let z = nalgebra::DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let chol = self.inner.design.cholesky()?;
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        Ok((&self.inner.state().w_hat + noise * alpha).as_slice().to_vec())
    }
}

impl Agent for TsMnl {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, t: usize, ctx: &RoundContext, rng: &mut ChaCha8Rng) -> Result<Decision> {
        self.inner.refit()?;
        let w = self.sample_parameter(t, rng)?;
        let u = ctx.utilities(&w)?;
        let (assortment, _) = best_assortment(&u, ctx.rewards(), self.max_size)?;
        Ok(Decision {
            assortment,
            phase: Phase::Planning,
        })
    }

    fn observe(&mut self, ctx: &RoundContext, offered: &Assortment, outcome: &ChoiceOutcome) -> Result<()> {
        self.inner.record(ctx, offered, outcome)
    }
}
