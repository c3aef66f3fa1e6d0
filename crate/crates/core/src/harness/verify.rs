//! Acceptance suite. Each criterion runs an oracle comparison, a property
//! check or a replicated simulation and returns one [`Verdict`].

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AlgoKind, ExperimentConfig};
use super::output::{format_csv, format_manifest};
use super::runner::{
    agent_stream, choice_stream, replica_contexts, replica_parameter, run_experiment, run_experiment_sequential,
    simulate, stream_rng, AggregateResult, Episode,
};
use crate::assortment::{best_assortment, brute_force_best};
use crate::bandit::{sample_ball, EnvironmentConfig, OfuMleMnl, OfuMnlPlusPlus};
use crate::error::Result;
use crate::estimation::mle::{mle_fit, MLE_TOL};
use crate::estimation::omd::warmup_criterion;
use crate::linalg::{project_metric_ball, project_metric_ellipsoid, Ellipsoid, PsdMatrix};
use crate::model::{
    check_self_concordance, loss, loss_gradient, loss_hessian, utility_hessian, Assortment, ChoiceOutcome,
    RoundContext, SELF_CONCORDANCE,
};

/// Warm-up threshold multiplier for the regret experiments, chosen on a
/// separate seed by a grid search (the formula's threshold keeps every round
/// in warm-up at this horizon).
pub const TUNED_TAU_MULTIPLIER: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub tau_multiplier: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tau_multiplier: TUNED_TAU_MULTIPLIER,
        }
    }
}

fn timed(id: usize, title: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Result<Verdict> {
    let start = Instant::now();
    let (passed, detail) = f()?;
    Ok(Verdict {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Applies a wall-clock budget to an already computed verdict.
fn within(mut v: Verdict, budget_s: f64) -> Verdict {
    if v.seconds >= budget_s {
        v.passed = false;
        v.detail.push_str(&format!("; over the {budget_s:.0} s budget"));
    }
    v
}

fn rng_for(seed: u64, criterion: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 << 32 | criterion);
    rng
}

fn random_context(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Result<RoundContext> {
    let mut features = Vec::with_capacity(n * dim);
    for _ in 0..n {
        features.extend(sample_ball(rng, dim, 1.0));
    }
    let rewards = (0..n).map(|_| rng.random::<f64>()).collect();
    RoundContext::from_flat(dim, features, rewards)
}

/// Drops items whose margin `rᵢ − V` is zero: adding or removing them leaves
/// the revenue unchanged, so they are the only source of optimal ties.
fn tie_normalized(set: &Assortment, rewards: &[f64], value: f64) -> Vec<usize> {
    set.items()
        .iter()
        .copied()
        .filter(|&i| (rewards[i] - value).abs() > 1e-9)
        .collect()
}

pub fn assortment_oracle(seed: u64) -> Result<Verdict> {
    let v = timed(1, "assortment oracle", || {
        let mut rng = rng_for(seed, 1);
        let (mut max_gap, mut mismatches) = (0.0f64, 0);
        for _ in 0..1000 {
            let n = rng.random_range(1..=12);
            let k = rng.random_range(1..=4);
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let (bs, bv) = brute_force_best(&u, &r, k)?;
            let (s, v) = best_assortment(&u, &r, k)?;
            max_gap = max_gap.max((bv - v).abs());
            if tie_normalized(&bs, &r, bv) != tie_normalized(&s, &r, v) {
                mismatches += 1;
            }
        }
        Ok((
            max_gap <= 1e-9 && mismatches == 0,
            format!("1000 instances, max value gap {max_gap:.1e}, {mismatches} set mismatches"),
        ))
    })?;
    Ok(within(v, 10.0))
}

/// Random offered set and response for the calculus checks.
fn random_round(rng: &mut ChaCha8Rng) -> Result<(RoundContext, Assortment, ChoiceOutcome, Vec<f64>)> {
    let dim = rng.random_range(1..=6);
    let n = rng.random_range(1..=8);
    let ctx = random_context(rng, n, dim)?;
    let k = rng.random_range(1..=n.min(5));
    let mut items: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
    items.truncate(k);
    let s = Assortment::new(items, n, k)?;
    let pick = rng.random_range(0..=k);
    let y = if pick == 0 {
        ChoiceOutcome::outside(k)
    } else {
        ChoiceOutcome::item(&s, pick - 1)?
    };
    let radius = rng.random_range(0.1..3.0);
    Ok((ctx, s, y, sample_ball(rng, dim, radius)))
}

fn shifted(w: &[f64], j: usize, h: f64) -> Vec<f64> {
    let mut v = w.to_vec();
    v[j] += h;
    v
}

/// Relative error with the denominator floored at one, so vanishing
/// derivatives are compared in absolute terms.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = analytic.iter().fold(1.0f64, |m, a| m.max(a.abs()));
    diff / scale
}

pub fn calculus_checks(seed: u64) -> Result<Verdict> {
    const STEP: f64 = 1e-5;
    let v = timed(2, "loss derivatives", || {
        let mut rng = rng_for(seed, 2);
        let (mut grad_err, mut hess_err) = (0.0f64, 0.0f64);
        let (mut eig_lo, mut eig_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..100 {
            let (ctx, s, y, w) = random_round(&mut rng)?;
            let g = loss_gradient(&ctx, &s, &y, &w)?;
            let fd: Vec<f64> = (0..w.len())
                .map(|j| {
                    let up = loss(&ctx, &s, &y, &shifted(&w, j, STEP))?;
                    let down = loss(&ctx, &s, &y, &shifted(&w, j, -STEP))?;
                    Ok((up - down) / (2.0 * STEP))
                })
                .collect::<Result<_>>()?;
            grad_err = grad_err.max(rel_err(g.as_slice(), &fd));
        }
        for _ in 0..100 {
            let (ctx, s, y, w) = random_round(&mut rng)?;
            let h = loss_hessian(&ctx, &s, &w)?;
            let d = w.len();
            let mut fd = DMatrix::zeros(d, d);
            for j in 0..d {
                let up = loss_gradient(&ctx, &s, &y, &shifted(&w, j, STEP))?;
                let down = loss_gradient(&ctx, &s, &y, &shifted(&w, j, -STEP))?;
                fd.set_column(j, &((up - down) / (2.0 * STEP)));
            }
            hess_err = hess_err.max(rel_err(h.matrix().as_slice(), fd.as_slice()));
            let eig = h.eigenvalues();
            eig_lo = eig_lo.min(eig.min());
            eig_hi = eig_hi.max(eig.max());
        }
        let passed = grad_err <= 1e-6 && hess_err <= 1e-5 && eig_lo >= -1e-12 && eig_hi <= 1.0 + 1e-10;
        Ok((
            passed,
            format!(
                "gradient rel err {grad_err:.1e}, Hessian rel err {hess_err:.1e}, eigenvalues in [{eig_lo:.1e}, {eig_hi:.3}]"
            ),
        ))
    })?;
    Ok(within(v, 5.0))
}

/// Extreme generalized eigenvalues of the pencil `(a, b)` with `b` positive definite.
fn pencil_range(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(f64, f64)> {
    let l = b.clone().cholesky()?.l();
    let li = l.try_inverse()?;
    let m = &li * a * li.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m).eigenvalues;
    Some((eig.min(), eig.max()))
}

pub fn self_concordance(seed: u64) -> Result<Verdict> {
    timed(3, "self-concordance", || {
        let mut rng = rng_for(seed, 3);
        let mut max_ratio = 0.0f64;
        let mut skipped = 0;
        for _ in 0..1000 {
            let k = rng.random_range(1..=5);
            let a: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
            let b: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let report = check_self_concordance(&a, &b, 1, &mut rng)?;
            max_ratio = max_ratio.max(report.max_ratio);
            skipped += report.skipped;
        }
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let k = rng.random_range(1..=5);
            let z1: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z2: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let m = SELF_CONCORDANCE * z1.iter().zip(&z2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let h1 = utility_hessian(&z1) + DMatrix::identity(k, k) * 1e-10;
            let h2 = utility_hessian(&z2);
            let Some((lo, hi)) = pencil_range(&h2, &h1) else {
                worst = f64::INFINITY;
                continue;
            };
            worst = worst.max((-m).exp() - lo).max(hi - m.exp());
        }
        let passed = max_ratio <= SELF_CONCORDANCE + 1e-3 && worst <= 1e-6;
        Ok((
            passed,
            format!(
                "max |φ'''|/(‖b‖∞φ'') {max_ratio:.4} (bound {SELF_CONCORDANCE:.4}, {skipped} unresolved), worst sandwich excess {worst:.1e}"
            ),
        ))
    })
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Result<PsdMatrix> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let floor = rng.random_range(1e-3..1.0);
    PsdMatrix::new(&a * a.transpose() + DMatrix::identity(d, d) * floor)
}

fn metric_inner(metric: &PsdMatrix, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.transpose() * metric.matrix() * b)[(0, 0)]
}

/// Largest `⟨v − p, q − p⟩_M` over sampled feasible `q`, and the idempotence error.
struct ProjectionStats {
    vi: f64,
    idem: f64,
}

impl ProjectionStats {
    fn absorb(&mut self, v: &DVector<f64>, p: &DVector<f64>, again: &DVector<f64>, metric: &PsdMatrix, qs: &[DVector<f64>]) {
        let r = v - p;
        for q in qs {
            self.vi = self.vi.max(metric_inner(metric, &r, &(q - p)));
        }
        self.idem = self.idem.max((again - p).amax());
    }
}

pub fn projection_optimality(seed: u64) -> Result<Verdict> {
    const FEASIBLE_SAMPLES: usize = 32;
    timed(4, "projection optimality", || {
        let mut rng = rng_for(seed, 4);
        let mut ball = ProjectionStats { vi: f64::NEG_INFINITY, idem: 0.0 };
        let mut ell = ProjectionStats { vi: f64::NEG_INFINITY, idem: 0.0 };
        for _ in 0..500 {
            let d = rng.random_range(1..=6);
            let metric = random_spd(&mut rng, d)?;
            let radius = rng.random_range(0.2..3.0);
            let v = DVector::from_vec(sample_ball(&mut rng, d, 3.0 * radius));
            let p = project_metric_ball(&v, &metric, radius)?;
            let again = project_metric_ball(&p, &metric, radius)?;
            // half the samples on the boundary, where the inequality is tight
            let qs: Vec<DVector<f64>> = (0..FEASIBLE_SAMPLES)
                .map(|j| {
                    let q = DVector::from_vec(sample_ball(&mut rng, d, radius));
                    if j % 2 == 0 && q.norm() > 0.0 { q.normalize() * radius } else { q }
                })
                .collect();
            ball.absorb(&v, &p, &again, &metric, &qs);
        }
        for _ in 0..500 {
            let d = rng.random_range(1..=6);
            let metric = random_spd(&mut rng, d)?;
            let shape = random_spd(&mut rng, d)?;
            let center = DVector::from_vec(sample_ball(&mut rng, d, 1.0));
            let radius = rng.random_range(0.1..2.0);
            let e = Ellipsoid::new(center.clone(), shape.clone(), radius)?;
            let scale = radius / shape.min_eigenvalue().sqrt();
            let v = &center + DVector::from_vec(sample_ball(&mut rng, d, 3.0 * scale));
            let p = project_metric_ellipsoid(&v, &metric, &e)?;
            let again = project_metric_ellipsoid(&p, &metric, &e)?;
            let chol_t = shape.cholesky()?.l().transpose();
            let qs: Vec<DVector<f64>> = (0..FEASIBLE_SAMPLES)
                .map(|j| {
                    let mut z = DVector::from_vec(sample_ball(&mut rng, d, radius));
                    if j % 2 == 0 && z.norm() > 0.0 {
                        z = z.normalize() * radius;
                    }
                    // ‖Lᵀ(q − c)‖ = ‖z‖
                    &center + chol_t.solve_upper_triangular(&z).expect("positive diagonal")
                })
                .collect();
            ell.absorb(&v, &p, &again, &metric, &qs);
        }
        let passed = ball.vi <= 1e-8 && ell.vi <= 1e-8 && ball.idem <= 1e-10 && ell.idem <= 1e-10;
        Ok((
            passed,
            format!(
                "ball: max VI residual {:.1e}, idempotence {:.1e}; ellipsoid: max VI residual {:.1e}, idempotence {:.1e}",
                ball.vi, ball.idem, ell.vi, ell.idem
            ),
        ))
    })
}

/// Per-replica coverage tallies for the online confidence sets.
#[derive(Default)]
struct Coverage {
    planning_checks: usize,
    /// Replicas with at least one planning round.
    planning_replicas: usize,
    planning_covered: usize,
    warm_checks: usize,
    /// Replicas where a warm-up set existed at some round.
    warm_replicas: usize,
    warm_covered: usize,
}

impl Coverage {
    fn rate(covered: usize, of: usize) -> f64 {
        if of == 0 { f64::NAN } else { covered as f64 / of as f64 }
    }
}

fn online_coverage_arm(seed: u64, tau_multiplier: f64, replicas: usize, cov: &mut Coverage) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = seed;
    cfg.env = EnvironmentConfig {
        n_items: 50,
        max_size: 5,
        dim: 3,
        bound: 1.0,
        horizon: 500,
    };
    cfg.delta = 0.1;
    let algo = AlgoKind::OfuMnlPlusPlus;
    for r in 0..replicas {
        let w_star = replica_parameter(&cfg, r)?;
        let mut agent = OfuMnlPlusPlus::new(3, 1.0, cfg.delta, 5, tau_multiplier)?;
        let episode = Episode {
            env: &cfg.env,
            w_star: &w_star,
            contexts: replica_contexts(&cfg, r),
            choice_rng: stream_rng(seed, r, choice_stream(algo)),
            agent_rng: stream_rng(seed, r, agent_stream(algo)),
            timing: false,
        };
        let w = w_star.as_slice();
        let (mut plan_ok, mut warm_ok, mut plan_n, mut warm_n) = (true, true, 0, 0);
        simulate(&mut agent, episode, |a, t, ctx| {
            if let Some(set) = a.warmup_set() {
                warm_n += 1;
                warm_ok &= set.contains(w)?;
            }
            if !warmup_criterion(ctx, &a.warmup_state().h, a.tau(t))?.triggered {
                plan_n += 1;
                let st = a.planning_state();
                let diff: Vec<f64> = w.iter().zip(st.w.iter()).map(|(x, y)| x - y).collect();
                plan_ok &= st.h.mahalanobis(&diff)? <= a.beta(t);
            }
            Ok(())
        })?;
        cov.planning_checks += plan_n;
        cov.warm_checks += warm_n;
        if plan_n > 0 {
            cov.planning_replicas += 1;
            cov.planning_covered += usize::from(plan_ok);
        }
        if warm_n > 0 {
            cov.warm_replicas += 1;
            cov.warm_covered += usize::from(warm_ok);
        }
    }
    Ok(())
}

/// 200 replicas at the formula's warm-up threshold (warm-up throughout) and
/// 200 at the tuned one (planning throughout), so each set is exercised.
pub fn online_coverage(seed: u64, tau_multiplier: f64) -> Result<Verdict> {
    let v = timed(5, "online confidence coverage", || {
        let mut cov = Coverage::default();
        online_coverage_arm(seed, 1.0, 200, &mut cov)?;
        online_coverage_arm(seed.wrapping_add(1), tau_multiplier, 200, &mut cov)?;
        let plan = Coverage::rate(cov.planning_covered, cov.planning_replicas);
        let warm = Coverage::rate(cov.warm_covered, cov.warm_replicas);
        // a rate over no replicas is NaN and fails
        let passed = plan >= 0.9 && warm >= 0.9;
        Ok((
            passed,
            format!(
                "w* in C_t at every planning round in {:.1}% of {} replicas ({} checks); w* in W_t throughout in {:.1}% of {} replicas ({} checks)",
                100.0 * plan,
                cov.planning_replicas,
                cov.planning_checks,
                100.0 * warm,
                cov.warm_replicas,
                cov.warm_checks
            ),
        ))
    })?;
    Ok(within(v, 600.0))
}

pub fn mle_coverage(seed: u64) -> Result<Verdict> {
    timed(6, "MLE confidence coverage", || {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.env.horizon = 300;
        cfg.delta = 0.1;
        let algo = AlgoKind::OfuMleMnl;
        let e = cfg.env.clone();
        let (mut covered, mut worst) = (0, f64::NEG_INFINITY);
        let replicas = 200;
        for r in 0..replicas {
            let w_star = replica_parameter(&cfg, r)?;
            let mut agent = OfuMleMnl::new(e.dim, e.bound, cfg.delta, e.max_size)?;
            let episode = Episode {
                env: &cfg.env,
                w_star: &w_star,
                contexts: replica_contexts(&cfg, r),
                choice_rng: stream_rng(cfg.seed, r, choice_stream(algo)),
                agent_rng: stream_rng(cfg.seed, r, agent_stream(algo)),
                timing: false,
            };
            let mut ok = true;
            simulate(&mut agent, episode, |a, t, _| {
                let st = a.state();
                if st.history.is_empty() {
                    return Ok(());
                }
                // the agent refits inside `select`; fit the same history here
                let fitted = mle_fit(st.clone(), MLE_TOL)?;
                let excess = fitted.history.loss(w_star.as_slice()) - fitted.loss_at_mle - a.gamma_sq(t);
                worst = worst.max(excess);
                ok &= excess <= 0.0;
                Ok(())
            })?;
            covered += usize::from(ok);
        }
        let frac = covered as f64 / replicas as f64;
        Ok((
            frac >= 0.9,
            format!(
                "{replicas} replicas, T = 300: covered {:.1}%, max L(w*) − L(ŵ) − γ² = {worst:.3}",
                100.0 * frac
            ),
        ))
    })
}

/// Paper-scale configuration for the regret and runtime criteria.
pub fn figure_config(bound: f64, opts: &VerifyOptions) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.algorithms = vec![
        AlgoKind::OfuMnlPlusPlus,
        AlgoKind::OfuMleMnl,
        AlgoKind::UcbMnl,
        AlgoKind::TsMnl,
    ];
    cfg.env.bound = bound;
    cfg.runs = 20;
    cfg.seed = opts.seed;
    cfg.tau_multiplier = opts.tau_multiplier;
    cfg.timing = true;
    cfg
}

/// Experiment results for `B = 1` and `B = 2`, with the total wall-clock.
pub struct FigureRuns {
    pub results: Vec<(f64, AggregateResult)>,
    pub seconds: f64,
}

pub fn figure_runs(opts: &VerifyOptions) -> Result<FigureRuns> {
    let start = Instant::now();
    let results = [1.0, 2.0]
        .into_iter()
        .map(|b| Ok((b, run_experiment(&figure_config(b, opts))?)))
        .collect::<Result<_>>()?;
    Ok(FigureRuns {
        results,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn series(res: &AggregateResult, algo: AlgoKind) -> &super::runner::AlgoSeries {
    res.get(algo).expect("figure config runs every algorithm")
}

/// Mean of `v` over the 1-based rounds `from..=to`.
fn window_mean(v: &[f64], from: usize, to: usize) -> f64 {
    v[from - 1..to].iter().sum::<f64>() / (to + 1 - from) as f64
}

/// Mean per-round increase of the mean cumulative regret over `from..=to`.
fn slope(v: &[f64], from: usize, to: usize) -> f64 {
    (v[to - 1] - v[from - 1]) / (to - from) as f64
}

pub fn regret_ordering(runs: &FigureRuns) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for (b, res) in &runs.results {
        let t = res.horizon;
        let fin = |a| series(res, a).mean_cum_regret[t - 1];
        let sl = |a| slope(&series(res, a).mean_cum_regret, 2500, t);
        let (mle, ucb, ts) = (fin(AlgoKind::OfuMleMnl), fin(AlgoKind::UcbMnl), fin(AlgoKind::TsMnl));
        let (pp, ucb_s, ts_s) = (sl(AlgoKind::OfuMnlPlusPlus), sl(AlgoKind::UcbMnl), sl(AlgoKind::TsMnl));
        let ok_final = mle < ucb && mle < ts;
        let ok_slope = pp <= ucb_s && pp <= ts_s;
        passed &= ok_final && ok_slope;
        parts.push(format!(
            "B={b}: final regret mle {mle:.2} vs ucb {ucb:.2}, ts {ts:.2} [{}]; slope ++ {pp:.2e} vs ucb {ucb_s:.2e}, ts {ts_s:.2e} [{}]",
            if ok_final { "ok" } else { "fails" },
            if ok_slope { "ok" } else { "fails" }
        ));
    }
    within(
        Verdict {
            id: 7,
            title: "regret ordering",
            passed,
            detail: parts.join("; "),
            seconds: runs.seconds,
        },
        1800.0,
    )
}

pub fn runtime_shape(runs: &FigureRuns) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for (b, res) in &runs.results {
        let ratio = |a| {
            let ms = &series(res, a).mean_round_ms;
            window_mean(ms, 2900, 3000) / window_mean(ms, 100, 200)
        };
        let pp = ratio(AlgoKind::OfuMnlPlusPlus);
        let mle = ratio(AlgoKind::OfuMleMnl);
        passed &= (0.5..=2.0).contains(&pp) && mle >= 3.0;
        parts.push(format!("B={b}: late/early time ratio ++ {pp:.2}, mle {mle:.1}"));
    }
    Verdict {
        id: 8,
        title: "per-round runtime shape",
        passed,
        detail: parts.join("; "),
        seconds: 0.0,
    }
}

pub fn sublinear_regret(runs: &FigureRuns) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for (b, res) in &runs.results {
        let r = &series(res, AlgoKind::OfuMnlPlusPlus).mean_cum_regret;
        let t = res.horizon;
        let late = r[t - 1] / t as f64;
        let early = r[299] / 300.0;
        passed &= late < 0.5 * early;
        parts.push(format!("B={b}: R(T)/T {late:.4} vs R(300)/300 {early:.4}"));
    }
    Verdict {
        id: 9,
        title: "sublinear regret",
        passed,
        detail: parts.join("; "),
        seconds: 0.0,
    }
}

pub fn determinism(seed: u64) -> Result<Verdict> {
    timed(10, "determinism", || {
        let mut cfg = ExperimentConfig::default();
        cfg.algorithms = AlgoKind::ALL.to_vec();
        cfg.env.horizon = 150;
        cfg.env.n_items = 20;
        cfg.runs = 3;
        cfg.seed = seed;
        cfg.tau_multiplier = TUNED_TAU_MULTIPLIER;
        cfg.timing = false;
        let render = |res: &AggregateResult| (format_csv(res), format_manifest(&cfg, res));
        let first = render(&run_experiment(&cfg)?);
        let second = render(&run_experiment(&cfg)?);
        let sequential = render(&run_experiment_sequential(&cfg)?);
        let repeat = first == second;
        let modes = first == sequential;
        Ok((
            repeat && modes,
            format!(
                "repeat run identical: {repeat}; pooled and sequential identical: {modes}; {} CSV bytes",
                first.0.len()
            ),
        ))
    })
}

/// Runs every criterion in order, handing each verdict to `report` as soon as
/// it is available.
pub fn verify_all(opts: &VerifyOptions, mut report: impl FnMut(&Verdict)) -> Result<Vec<Verdict>> {
    let mut out = Vec::with_capacity(10);
    let mut push = |v: Verdict| {
        report(&v);
        out.push(v);
    };
    push(assortment_oracle(opts.seed)?);
    push(calculus_checks(opts.seed)?);
    push(self_concordance(opts.seed)?);
    push(projection_optimality(opts.seed)?);
    push(online_coverage(opts.seed, opts.tau_multiplier)?);
    push(mle_coverage(opts.seed)?);
    let runs = figure_runs(opts)?;
    push(regret_ordering(&runs));
    push(runtime_shape(&runs));
    push(sublinear_regret(&runs));
    push(determinism(opts.seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_normalization_drops_zero_margin_items() {
        let s = Assortment::new(vec![0, 2], 3, 2).unwrap();
        assert_eq!(tie_normalized(&s, &[0.9, 0.1, 0.5], 0.5), vec![0]);
    }

    #[test]
    fn pencil_of_scaled_identity() {
        let a = DMatrix::identity(3, 3) * 2.0;
        let b = DMatrix::identity(3, 3) * 4.0;
        let (lo, hi) = pencil_range(&a, &b).unwrap();
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);
    }

    #[test]
    fn windows_and_slopes() {
        let v: Vec<f64> = (1..=10).map(|t| 2.0 * t as f64).collect();
        assert_eq!(window_mean(&v, 1, 3), 4.0);
        assert_eq!(slope(&v, 2, 10), 2.0);
    }

    #[test]
    fn verdict_line_format() {
        let v = Verdict {
            id: 3,
            title: "x",
            passed: false,
            detail: "y".into(),
            seconds: 1.3,
        };
        assert_eq!(v.line(), "FAIL  3 x (1.3 s): y");
    }
}
