//! Synthetic environment: i.i.d. contexts on the unit ball, uniform rewards,
//! MNL choices under a hidden parameter, and regret accounting.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::assortment::{best_assortment, revenue};
use crate::error::{MnlError, Result};
use crate::model::{probabilities_from_utilities, Assortment, MnlParameter, RoundContext};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentConfig {
    pub n_items: usize,
    pub max_size: usize,
    pub dim: usize,
    pub bound: f64,
    pub horizon: usize,
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 || self.dim == 0 || self.horizon == 0 {
            return Err(MnlError::Config("N, d and T must be >= 1".into()));
        }
        if self.max_size == 0 || self.max_size > self.n_items {
            return Err(MnlError::Config(format!(
                "K = {} must satisfy 1 <= K <= N = {}",
                self.max_size, self.n_items
            )));
        }
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(MnlError::Config(format!("B = {} must be positive", self.bound)));
        }
        Ok(())
    }
}

/// Uniform draw from the radius-`radius` ball: a normalized Gaussian direction
/// scaled by `radius·U^{1/d}`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let scale = radius * u.powf(1.0 / dim as f64) / n;
        for x in &mut v {
            *x *= scale;
        }
        // guard the rounding of the final scale
        let m = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if m > radius {
            for x in &mut v {
                *x *= radius / m;
            }
        }
        return v;
    }
}

/// Hidden parameter drawn uniformly from the `B`-ball.
pub fn sample_true_parameter<R: Rng + ?Sized>(rng: &mut R, dim: usize, bound: f64) -> Result<MnlParameter> {
    MnlParameter::new(DVector::from_vec(sample_ball(rng, dim, bound)), bound)
}

/// Fresh features uniform on the unit ball and rewards uniform on `[0, 1]`.
pub fn env_step<R: Rng + ?Sized>(cfg: &EnvironmentConfig, rng: &mut R) -> Result<RoundContext> {
    let mut features = Vec::with_capacity(cfg.n_items * cfg.dim);
    for _ in 0..cfg.n_items {
        features.extend(sample_ball(rng, cfg.dim, 1.0));
    }
    let rewards = (0..cfg.n_items).map(|_| rng.random::<f64>()).collect();
    RoundContext::from_flat(cfg.dim, features, rewards)
}

/// Source of per-round contexts. The i.i.d. generator is the default; other
/// sources (for instance adversarial sequences) plug in here.
pub trait ContextSource {
    fn next_context(&mut self, t: usize) -> Result<RoundContext>;
}

/// Contexts from [`env_step`] driven by an owned generator.
pub struct UniformBallContexts<R> {
    cfg: EnvironmentConfig,
    rng: R,
}

impl<R: Rng> UniformBallContexts<R> {
    pub fn new(cfg: EnvironmentConfig, rng: R) -> Self {
        Self { cfg, rng }
    }
}

impl<R: Rng> ContextSource for UniformBallContexts<R> {
    fn next_context(&mut self, _t: usize) -> Result<RoundContext> {
        env_step(&self.cfg, &mut self.rng)
    }
}

/// Simulator-side quantities for one round, computed with the true parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundDiagnostics {
    /// `R(S*, w*) − R(S, w*)`.
    pub inst_regret: f64,
    /// Variance of the realized reward, with `r₀ = 0`.
    pub sigma_sq: f64,
    /// `Σ_{i∈S*} p(i|S*,w*)·p(0|S*,w*)`.
    pub kappa_star: f64,
    pub optimal: Assortment,
    pub optimal_revenue: f64,
}

/// Regret of `offered` against the best assortment of size at most `max_size`.
pub fn regret_and_diagnostics(
    ctx: &RoundContext,
    offered: &Assortment,
    w_star: &[f64],
    max_size: usize,
) -> Result<RoundDiagnostics> {
    offered.check(ctx)?;
    let u = ctx.utilities(w_star)?;
    let r = ctx.rewards();
    let (optimal, optimal_revenue) = best_assortment(&u, r, max_size)?;
    let got = revenue(&u, r, offered.items());
    let inst_regret = (optimal_revenue - got).max(0.0);

    let (mean, second) = offered_moments(&u, r, offered.items());
    let sigma_sq = (second - mean * mean).max(0.0);

    let p = probabilities_from_utilities(
        &optimal.items().iter().map(|&i| u[i]).collect::<Vec<_>>(),
    );
    let kappa_star = p[1..].iter().map(|pi| pi * p[0]).sum();
    Ok(RoundDiagnostics {
        inst_regret,
        sigma_sq,
        kappa_star,
        optimal,
        optimal_revenue,
    })
}

/// `(E[r], E[r²])` of the realized reward for the offered set.
fn offered_moments(u: &[f64], r: &[f64], set: &[usize]) -> (f64, f64) {
    let z: Vec<f64> = set.iter().map(|&i| u[i]).collect();
    let p = probabilities_from_utilities(&z);
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (k, &i) in set.iter().enumerate() {
        m1 += p[k + 1] * r[i];
        m2 += p[k + 1] * r[i] * r[i];
    }
    (m1, m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assortment::brute_force_best;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ball_samples_are_uniform_in_radius() {
        // for a uniform draw, ‖x‖^d is uniform on [0, 1]
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [1, 3, 5] {
            let mut u: Vec<f64> = (0..2000)
                .map(|_| {
                    let x = sample_ball(&mut rng, dim, 2.0);
                    (x.iter().map(|v| v * v).sum::<f64>().sqrt() / 2.0).powi(dim as i32)
                })
                .collect();
            assert!(u.iter().all(|&v| v <= 1.0));
            u.sort_by(f64::total_cmp);
            let n = u.len() as f64;
            let ks = u
                .iter()
                .enumerate()
                .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
                .fold(0.0f64, f64::max);
            // 1% critical value of the one-sample KS statistic
            assert!(ks < 1.63 / n.sqrt(), "dim {dim}: KS {ks}");
        }
    }

    #[test]
    fn ball_directions_are_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 4000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            for (m, v) in mean.iter_mut().zip(sample_ball(&mut rng, 3, 1.0)) {
                *m += v / n as f64;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.05), "{mean:?}");
    }

    #[test]
    fn contexts_respect_bounds() {
        let cfg = EnvironmentConfig {
            n_items: 7,
            max_size: 2,
            dim: 4,
            bound: 1.0,
            horizon: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let ctx = env_step(&cfg, &mut rng).unwrap();
            assert_eq!(ctx.n_items(), 7);
            for i in 0..7 {
                assert!(ctx.feature(i).iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
                assert!((0.0..1.0).contains(&ctx.rewards()[i]));
            }
        }
    }

    #[test]
    fn config_validation() {
        let ok = EnvironmentConfig {
            n_items: 5,
            max_size: 5,
            dim: 2,
            bound: 1.0,
            horizon: 3,
        };
        ok.validate().unwrap();
        assert!(EnvironmentConfig { max_size: 6, ..ok.clone() }.validate().is_err());
        assert!(EnvironmentConfig { max_size: 0, ..ok.clone() }.validate().is_err());
        assert!(EnvironmentConfig { bound: 0.0, ..ok.clone() }.validate().is_err());
        assert!(EnvironmentConfig { dim: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn equal_utilities_unit_rewards_variance() {
        // m items with zero utility and reward 1: revenue m/(m+1), variance m/(m+1)²
        for m in 1..=5usize {
            let ctx = RoundContext::new(&vec![vec![0.0]; m], vec![1.0; m]).unwrap();
            let s = Assortment::new((0..m).collect(), m, m).unwrap();
            let d = regret_and_diagnostics(&ctx, &s, &[0.3], m).unwrap();
            let mf = m as f64;
            assert!((d.sigma_sq - mf / ((mf + 1.0) * (mf + 1.0))).abs() < 1e-12);
            assert!(d.inst_regret.abs() < 1e-12);
            assert!((d.optimal_revenue - mf / (mf + 1.0)).abs() < 1e-12);
            assert!((d.kappa_star - mf / ((mf + 1.0) * (mf + 1.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn playing_the_optimum_has_no_regret() {
        let cfg = EnvironmentConfig {
            n_items: 9,
            max_size: 3,
            dim: 3,
            bound: 2.0,
            horizon: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let w = sample_true_parameter(&mut rng, 3, 2.0).unwrap();
            let ctx = env_step(&cfg, &mut rng).unwrap();
            let u = ctx.utilities(w.as_slice()).unwrap();
            let (bs, bv) = brute_force_best(&u, ctx.rewards(), 3).unwrap();
            let d = regret_and_diagnostics(&ctx, &bs, w.as_slice(), 3).unwrap();
            assert!(d.inst_regret < 1e-9);
            assert!((d.optimal_revenue - bv).abs() < 1e-9);
            // any other set has regret in [0, 1]
            let other = Assortment::singleton(rng.random_range(0..9));
            let d = regret_and_diagnostics(&ctx, &other, w.as_slice(), 3).unwrap();
            assert!((0.0..=1.0).contains(&d.inst_regret));
            assert!(d.sigma_sq >= 0.0 && d.sigma_sq <= 0.25 + 1e-12);
        }
    }
}
