//! Monte Carlo replication with common random numbers.
//!
//! All randomness comes from one ChaCha8 key (the experiment seed) with a
//! separate stream per `(replica, purpose)`. Within a replica every algorithm
//! regenerates the same context stream, while choice noise and the agent's
//! own draws get a stream per algorithm.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AlgoKind, ExperimentConfig};
use crate::bandit::{
    regret_and_diagnostics, sample_true_parameter, Agent, ContextSource, EnvironmentConfig, OfuMleMnl,
    OfuMnlPlusPlus, Phase, RoundRecord, TsMnl, UcbMnl, UniformBallContexts,
};
use crate::error::{MnlError, Result};
use crate::model::{sample_choice, MnlParameter, RoundContext};

const STREAMS_PER_REPLICA: u64 = 64;
const PARAMETER_STREAM: u64 = 0;
const CONTEXT_STREAM: u64 = 1;

/// Generator for `purpose` within `replica`.
pub fn stream_rng(seed: u64, replica: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64 * STREAMS_PER_REPLICA + purpose);
    rng
}

pub fn choice_stream(algo: AlgoKind) -> u64 {
    2 + 2 * algo.id()
}

pub fn agent_stream(algo: AlgoKind) -> u64 {
    3 + 2 * algo.id()
}

pub fn replica_parameter(cfg: &ExperimentConfig, replica: usize) -> Result<MnlParameter> {
    let mut rng = stream_rng(cfg.seed, replica, PARAMETER_STREAM);
    sample_true_parameter(&mut rng, cfg.env.dim, cfg.env.bound)
}

pub fn replica_contexts(cfg: &ExperimentConfig, replica: usize) -> UniformBallContexts<ChaCha8Rng> {
    UniformBallContexts::new(cfg.env.clone(), stream_rng(cfg.seed, replica, CONTEXT_STREAM))
}

pub fn build_agent(algo: AlgoKind, cfg: &ExperimentConfig) -> Result<Box<dyn Agent>> {
    let e = &cfg.env;
    Ok(match algo {
        AlgoKind::OfuMnlPlusPlus => Box::new(OfuMnlPlusPlus::new(
            e.dim,
            e.bound,
            cfg.delta,
            e.max_size,
            cfg.tau_multiplier,
        )?),
        AlgoKind::OfuMleMnl => Box::new(OfuMleMnl::new(e.dim, e.bound, cfg.delta, e.max_size)?),
        AlgoKind::UcbMnl => Box::new(UcbMnl::new(e.dim, e.bound, e.max_size, cfg.baseline_c, cfg.baseline_lambda)?),
        AlgoKind::TsMnl => Box::new(TsMnl::new(e.dim, e.bound, e.max_size, cfg.baseline_c, cfg.baseline_lambda)?),
        AlgoKind::Greedy => Box::new(UcbMnl::greedy(e.dim, e.bound, e.max_size, cfg.baseline_lambda)?),
    })
}

/// FNV-1a over the bit patterns of every feature and reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamHash(pub u64);

impl Default for StreamHash {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl StreamHash {
    pub fn absorb(&mut self, ctx: &RoundContext) {
        for v in ctx.features_flat().iter().chain(ctx.rewards()) {
            for b in v.to_bits().to_le_bytes() {
                self.0 ^= u64::from(b);
                self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
}

/// Everything one agent needs for one replica.
pub struct Episode<'a, C> {
    pub env: &'a EnvironmentConfig,
    pub w_star: &'a MnlParameter,
    pub contexts: C,
    pub choice_rng: ChaCha8Rng,
    pub agent_rng: ChaCha8Rng,
    pub timing: bool,
}

/// Plays `agent` for the full horizon. `inspect` sees the agent before each
/// round's decision, for diagnostics that need its internal state.
pub fn simulate<A, C>(
    agent: &mut A,
    mut episode: Episode<'_, C>,
    mut inspect: impl FnMut(&A, usize, &RoundContext) -> Result<()>,
) -> Result<(Vec<RoundRecord>, StreamHash)>
where
    A: Agent + ?Sized,
    C: ContextSource,
{
    let w = episode.w_star.as_slice();
    let mut hash = StreamHash::default();
    let mut records = Vec::with_capacity(episode.env.horizon);
    for t in 1..=episode.env.horizon {
        let ctx = episode.contexts.next_context(t)?;
        hash.absorb(&ctx);
        inspect(agent, t, &ctx)?;

        let start = episode.timing.then(Instant::now);
        let decision = agent.select(t, &ctx, &mut episode.agent_rng)?;
        let mut elapsed = start.map_or(0, |s| s.elapsed().as_nanos() as u64);
        let outcome = sample_choice(&ctx, &decision.assortment, w, &mut episode.choice_rng)?;
        let start = episode.timing.then(Instant::now);
        agent.observe(&ctx, &decision.assortment, &outcome)?;
        elapsed += start.map_or(0, |s| s.elapsed().as_nanos() as u64);

        let diag = regret_and_diagnostics(&ctx, &decision.assortment, w, episode.env.max_size)?;
        records.push(RoundRecord {
            t,
            phase: decision.phase,
            assortment: decision.assortment,
            outcome,
            inst_regret: diag.inst_regret,
            sigma_sq: diag.sigma_sq,
            kappa_star: diag.kappa_star,
            elapsed_ns: elapsed,
        });
    }
    Ok((records, hash))
}

/// Per-round series of one algorithm in one replica.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub algo: AlgoKind,
    pub cum_regret: Vec<f64>,
    pub round_ms: Vec<f64>,
    pub warmup: Vec<bool>,
    pub stream_hash: u64,
}

impl Trace {
    fn from_records(algo: AlgoKind, records: &[RoundRecord], hash: StreamHash) -> Self {
        let mut acc = 0.0;
        Self {
            algo,
            cum_regret: records
                .iter()
                .map(|r| {
                    acc += r.inst_regret;
                    acc
                })
                .collect(),
            round_ms: records.iter().map(|r| r.elapsed_ns as f64 * 1e-6).collect(),
            warmup: records.iter().map(|r| r.phase == Phase::Warmup).collect(),
            stream_hash: hash.0,
        }
    }
}

/// Runs one algorithm on one replica.
pub fn run_single(cfg: &ExperimentConfig, replica: usize, algo: AlgoKind) -> Result<Trace> {
    let w_star = replica_parameter(cfg, replica)?;
    let mut agent = build_agent(algo, cfg)?;
    let episode = Episode {
        env: &cfg.env,
        w_star: &w_star,
        contexts: replica_contexts(cfg, replica),
        choice_rng: stream_rng(cfg.seed, replica, choice_stream(algo)),
        agent_rng: stream_rng(cfg.seed, replica, agent_stream(algo)),
        timing: cfg.timing,
    };
    let (records, hash) = simulate(agent.as_mut(), episode, |_, _, _| Ok(()))?;
    Ok(Trace::from_records(algo, &records, hash))
}

/// Runs every configured algorithm on one replica and checks that they all
/// consumed the same context stream.
pub fn run_replica(cfg: &ExperimentConfig, replica: usize) -> Result<Vec<Trace>> {
    let traces = cfg
        .algorithms
        .iter()
        .map(|&a| run_single(cfg, replica, a))
        .collect::<Result<Vec<_>>>()?;
    if traces.windows(2).any(|w| w[0].stream_hash != w[1].stream_hash) {
        return Err(MnlError::Config(format!("replica {replica}: context streams differ across algorithms")));
    }
    Ok(traces)
}

/// Aggregated series for one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgoSeries {
    pub algo: AlgoKind,
    pub mean_cum_regret: Vec<f64>,
    /// Two sample standard deviations of the cumulative regret across replicas.
    pub band2sd: Vec<f64>,
    pub mean_round_ms: Vec<f64>,
    /// Fraction of replicas in a warm-up round at each `t`.
    pub warmup_frac: Vec<f64>,
    pub replica_cum_regret: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateResult {
    pub horizon: usize,
    pub runs: usize,
    pub series: Vec<AlgoSeries>,
    /// Context-stream hash of each replica.
    pub stream_hashes: Vec<u64>,
}

impl AggregateResult {
    pub fn get(&self, algo: AlgoKind) -> Option<&AlgoSeries> {
        self.series.iter().find(|s| s.algo == algo)
    }
}

fn mean_and_band(columns: &[&[f64]], t: usize) -> (f64, f64) {
    let n = columns.len() as f64;
    let mean = columns.iter().map(|c| c[t]).sum::<f64>() / n;
    if columns.len() < 2 {
        return (mean, 0.0);
    }
    let var = columns.iter().map(|c| (c[t] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * var.sqrt())
}

/// Reduces per-replica traces, indexed `[replica][algorithm]`, in replica order.
pub fn aggregate(cfg: &ExperimentConfig, replicas: Vec<Vec<Trace>>) -> AggregateResult {
    let horizon = cfg.env.horizon;
    let stream_hashes = replicas.iter().map(|r| r[0].stream_hash).collect();
    let series = cfg
        .algorithms
        .iter()
        .enumerate()
        .map(|(k, &algo)| {
            let traces: Vec<&Trace> = replicas.iter().map(|r| &r[k]).collect();
            let regrets: Vec<&[f64]> = traces.iter().map(|tr| tr.cum_regret.as_slice()).collect();
            let times: Vec<&[f64]> = traces.iter().map(|tr| tr.round_ms.as_slice()).collect();
            let n = traces.len() as f64;
            let (mean_cum_regret, band2sd) = (0..horizon).map(|t| mean_and_band(&regrets, t)).unzip();
            AlgoSeries {
                algo,
                mean_cum_regret,
                band2sd,
                mean_round_ms: (0..horizon).map(|t| mean_and_band(&times, t).0).collect(),
                warmup_frac: (0..horizon)
                    .map(|t| traces.iter().filter(|tr| tr.warmup[t]).count() as f64 / n)
                    .collect(),
                replica_cum_regret: traces.iter().map(|tr| tr.cum_regret.clone()).collect(),
            }
        })
        .collect();
    AggregateResult {
        horizon,
        runs: cfg.runs,
        series,
        stream_hashes,
    }
}

/// Replicas one after another on the calling thread.
pub fn run_experiment_sequential(cfg: &ExperimentConfig) -> Result<AggregateResult> {
    cfg.validate()?;
    let replicas = (0..cfg.runs)
        .map(|r| run_replica(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(cfg, replicas))
}

/// Replicas spread over the rayon pool; results are gathered in replica order.
#[cfg(feature = "parallel")]
pub fn run_experiment_parallel(cfg: &ExperimentConfig) -> Result<AggregateResult> {
    use rayon::prelude::*;
    cfg.validate()?;
    let replicas = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_replica(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(cfg, replicas))
}

/// Parallel when the `parallel` feature is on, sequential otherwise.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateResult> {
    #[cfg(feature = "parallel")]
    {
        run_experiment_parallel(cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_experiment_sequential(cfg)
    }
}
