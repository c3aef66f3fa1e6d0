use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mnlbandit::harness::output::manifest_path;
use mnlbandit::harness::verify::{verify_all, VerifyOptions};
use mnlbandit::harness::{emit_csv, run_experiment, write_manifest, AlgoKind, ExperimentConfig};

const DEFAULT_OUT: &str = "results.csv";

#[derive(Parser)]
#[command(name = "mnlbandit", version, about = "Replicated MNL contextual bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write the per-round CSV plus a manifest next to it.
    Run(RunArgs),
    /// Run the acceptance suite; exits with status 2 if any criterion fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Warm-up threshold multiplier used by the regret experiments.
        #[arg(long = "tau-mult")]
        tau_mult: Option<f64>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat `key = value` file; flags below override its entries.
    #[arg(long)]
    config: PathBuf,
    /// Algorithm to run (repeatable): ofu-mnl++, ofu-mle-mnl, ucb-mnl, ts-mnl, greedy.
    #[arg(long = "algo")]
    algos: Vec<AlgoKind>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long = "d")]
    dim: Option<usize>,
    #[arg(long = "N")]
    n_items: Option<usize>,
    #[arg(long = "K")]
    max_size: Option<usize>,
    #[arg(long = "B")]
    bound: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "tau-mult")]
    tau_mult: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> mnlbandit::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if !self.algos.is_empty() {
            cfg.algorithms = self.algos.clone();
        }
        let e = &mut cfg.env;
        e.horizon = self.horizon.unwrap_or(e.horizon);
        e.dim = self.dim.unwrap_or(e.dim);
        e.n_items = self.n_items.unwrap_or(e.n_items);
        e.max_size = self.max_size.unwrap_or(e.max_size);
        e.bound = self.bound.unwrap_or(e.bound);
        cfg.delta = self.delta.unwrap_or(cfg.delta);
        cfg.runs = self.runs.unwrap_or(cfg.runs);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.tau_multiplier = self.tau_mult.unwrap_or(cfg.tau_multiplier);
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        cfg.out.get_or_insert_with(|| PathBuf::from(DEFAULT_OUT));
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(args: &RunArgs) -> mnlbandit::Result<()> {
    let cfg = args.resolve()?;
    let out = cfg.out.clone().expect("resolved above");
    let result = run_experiment(&cfg)?;
    emit_csv(&result, &out)?;
    let manifest = manifest_path(&out);
    write_manifest(&cfg, &result, &manifest)?;
    for s in &result.series {
        eprintln!(
            "{:<12} mean cumulative regret at T: {:.4} (± {:.4})",
            s.algo.name(),
            s.mean_cum_regret[result.horizon - 1],
            s.band2sd[result.horizon - 1]
        );
    }
    eprintln!("wrote {} and {}", out.display(), manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Verify { seed, tau_mult } => {
            let mut opts = VerifyOptions {
                seed,
                ..VerifyOptions::default()
            };
            if let Some(m) = tau_mult {
                opts.tau_multiplier = m;
            }
            match verify_all(&opts, |v| println!("{}", v.line())) {
                Ok(verdicts) if verdicts.iter().all(|v| v.passed) => ExitCode::SUCCESS,
                Ok(verdicts) => {
                    let failed: Vec<String> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id.to_string()).collect();
                    println!("failed criteria: {}", failed.join(", "));
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
