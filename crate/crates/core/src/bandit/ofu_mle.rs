//! OFU-MLE-MNL: refits the norm-constrained MLE on the full history every
//! round and plays the best assortment under likelihood-ratio optimistic
//! utilities.

use rand_chacha::ChaCha8Rng;

use super::{Agent, Decision, Phase};
use crate::assortment::best_assortment;
use crate::error::Result;
use crate::estimation::mle::{
    bounds_metric, mle_fit, mle_optimistic_utility, mle_radius_sq, optimistic_bounds, MleState, MLE_TOL,
};
use crate::model::{Assortment, ChoiceOutcome, Observation, RoundContext};

/// Margin on revenue levels when deciding that an item cannot be selected.
const PRUNE_MARGIN: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct OfuMleMnl {
    name: String,
    mle: Option<MleState>,
    delta: f64,
    max_size: usize,
    gamma_sq_override: Option<f64>,
    exhaustive: bool,
    exact_solves: usize,
}

impl OfuMleMnl {
    pub fn new(dim: usize, bound: f64, delta: f64, max_size: usize) -> Result<Self> {
        Ok(Self {
            name: "ofu-mle-mnl".into(),
            mle: Some(MleState::new(dim, bound)?),
            delta,
            max_size,
            gamma_sq_override: None,
            exhaustive: false,
            exact_solves: 0,
        })
    }

    /// Replaces `γ_t(δ)²` by a fixed value.
    pub fn with_gamma_sq(mut self, gamma_sq: f64) -> Self {
        self.gamma_sq_override = Some(gamma_sq);
        self
    }

    /// Solves the optimistic utility problem for every item instead of only
    /// for items that can still enter the optimal assortment.
    pub fn exhaustive(mut self, on: bool) -> Self {
        self.exhaustive = on;
        self
    }

    pub fn state(&self) -> &MleState {
        self.mle.as_ref().expect("state is only taken inside select")
    }

    /// Number of optimistic utility problems solved so far.
    pub fn exact_solves(&self) -> usize {
        self.exact_solves
    }

    pub fn gamma_sq(&self, t: usize) -> f64 {
        let st = self.state();
        self.gamma_sq_override
            .unwrap_or_else(|| mle_radius_sq(t, st.bound, st.dim(), self.delta))
    }

    fn exact(&mut self, ctx: &RoundContext, items: &[usize], gamma_sq: f64) -> Result<Vec<f64>> {
        self.exact_solves += items.len();
        let st = self.state();
        items
            .iter()
            .map(|&i| mle_optimistic_utility(st, ctx.feature(i), gamma_sq))
            .collect()
    }

    /// Optimistic utilities of the items that can influence the optimal
    /// assortment, as `(item, utility)` pairs in index order.
    ///
    /// The optimal revenue is nondecreasing in every utility, so it lies
    /// between the optima under lower and upper utility bounds. Items whose
    /// reward falls below that range never earn a positive margin, and an item
    /// beaten on margin by `K` others across the whole range never makes the
    /// top `K`; dropping either kind leaves the bisection in `best_assortment`
    /// unchanged. Exact values replace the bounds one item at a time, most
    /// promising first, until every surviving item is exact.
    fn resolve(&mut self, ctx: &RoundContext, gamma_sq: f64) -> Result<Vec<(usize, f64)>> {
        let n = ctx.n_items();
        let r = ctx.rewards();
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        {
            let st = self.state();
            let local = bounds_metric(st);
            for i in 0..n {
                let (l, h) = optimistic_bounds(st, ctx.feature(i), gamma_sq, &local)?;
                lo.push(l);
                hi.push(h);
            }
        }
        let mut exact = vec![false; n];
        loop {
            let theta_lo = best_assortment(&lo, r, self.max_size)?.1 - PRUNE_MARGIN;
            let theta_hi = best_assortment(&hi, r, self.max_size)?.1 + PRUNE_MARGIN;
            let live: Vec<usize> = (0..n).filter(|&i| r[i] >= theta_lo).collect();
            let (vlo, vhi): (Vec<f64>, Vec<f64>) = live.iter().map(|&i| (lo[i].exp(), hi[i].exp())).unzip();
            let margin = |v: f64, i: usize, theta: f64| v * (r[i] - theta);
            let kept: Vec<usize> = (0..live.len())
                .filter(|&a| {
                    let i = live[a];
                    let beaten = (0..live.len())
                        .filter(|&c| {
                            let j = live[c];
                            j != i
                                && [theta_lo, theta_hi]
                                    .iter()
                                    .all(|&th| margin(vlo[c], j, th) > margin(vhi[a], i, th) + PRUNE_MARGIN)
                        })
                        .take(self.max_size)
                        .count();
                    beaten < self.max_size
                })
                .map(|a| live[a])
                .collect();
            let next = kept
                .iter()
                .copied()
                .filter(|&i| !exact[i])
                .max_by(|&a, &b| {
                    margin(hi[a].exp(), a, theta_lo)
                        .total_cmp(&margin(hi[b].exp(), b, theta_lo))
                        .then(b.cmp(&a))
                });
            match next {
                Some(i) => {
                    let u = mle_optimistic_utility(self.state(), ctx.feature(i), gamma_sq)?;
                    self.exact_solves += 1;
                    // bounds carry a tolerance; the exact value is authoritative
                    lo[i] = u;
                    hi[i] = u;
                    exact[i] = true;
                }
                None => return Ok(kept.into_iter().map(|i| (i, lo[i])).collect()),
            }
        }
    }
}

impl Agent for OfuMleMnl {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, t: usize, ctx: &RoundContext, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        let st = self.mle.take().expect("state present between rounds");
        self.mle = Some(mle_fit(st, MLE_TOL)?);
        let gamma_sq = self.gamma_sq(t);
        let n = ctx.n_items();
        let simple = self.exhaustive || self.state().history.is_empty() || !(gamma_sq > 0.0);
        let assortment = if simple {
            let all: Vec<usize> = (0..n).collect();
            let u = self.exact(ctx, &all, gamma_sq)?;
            best_assortment(&u, ctx.rewards(), self.max_size)?.0
        } else {
            let keep = self.resolve(ctx, gamma_sq)?;
            let u: Vec<f64> = keep.iter().map(|&(_, u)| u).collect();
            let r: Vec<f64> = keep.iter().map(|&(i, _)| ctx.rewards()[i]).collect();
            let (sub, _) = best_assortment(&u, &r, self.max_size)?;
            Assortment::new(sub.items().iter().map(|&k| keep[k].0).collect(), n, self.max_size)?
        };
        Ok(Decision {
            assortment,
            phase: Phase::Planning,
        })
    }

    fn observe(&mut self, ctx: &RoundContext, offered: &Assortment, outcome: &ChoiceOutcome) -> Result<()> {
        let obs = Observation::new(ctx, offered, outcome)?;
        self.mle.as_mut().expect("state present between rounds").push(&obs)
    }
}
