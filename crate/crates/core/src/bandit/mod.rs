//! Agents and the synthetic environment they play against.

pub mod baselines;
pub mod env;
pub mod ofu_mle;
pub mod ofu_mnl_pp;

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Assortment, ChoiceOutcome, RoundContext};

pub use baselines::{LinearMle, UcbMnl, TsMnl};
pub use env::{
    env_step, regret_and_diagnostics, sample_ball, sample_true_parameter, ContextSource, EnvironmentConfig,
    RoundDiagnostics, UniformBallContexts,
};
pub use ofu_mle::OfuMleMnl;
pub use ofu_mnl_pp::OfuMnlPlusPlus;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Warmup,
    Planning,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub assortment: Assortment,
    pub phase: Phase,
}

/// A bandit policy. `select` is called once per round with the 1-based round
/// index, followed by `observe` with the customer's response to that offer.
pub trait Agent: Send {
    fn name(&self) -> &str;

    fn select(&mut self, t: usize, ctx: &RoundContext, rng: &mut ChaCha8Rng) -> Result<Decision>;

    fn observe(&mut self, ctx: &RoundContext, offered: &Assortment, outcome: &ChoiceOutcome) -> Result<()>;
}

/// One simulated round as seen by the harness.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub phase: Phase,
    pub assortment: Assortment,
    pub outcome: ChoiceOutcome,
    pub inst_regret: f64,
    pub sigma_sq: f64,
    pub kappa_star: f64,
    /// Time spent in `select` and `observe`, in nanoseconds.
    pub elapsed_ns: u64,
}
