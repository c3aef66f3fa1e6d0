//! Experiment configuration: a flat `key = value` file, overridable key by key.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bandit::EnvironmentConfig;
use crate::error::{MnlError, Result};

/// The policies the harness knows how to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgoKind {
    OfuMnlPlusPlus,
    OfuMleMnl,
    UcbMnl,
    TsMnl,
    Greedy,
}

impl AlgoKind {
    pub const ALL: [AlgoKind; 5] = [
        AlgoKind::OfuMnlPlusPlus,
        AlgoKind::OfuMleMnl,
        AlgoKind::UcbMnl,
        AlgoKind::TsMnl,
        AlgoKind::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgoKind::OfuMnlPlusPlus => "ofu-mnl++",
            AlgoKind::OfuMleMnl => "ofu-mle-mnl",
            AlgoKind::UcbMnl => "ucb-mnl",
            AlgoKind::TsMnl => "ts-mnl",
            AlgoKind::Greedy => "greedy",
        }
    }

    /// Stable index used to derive per-algorithm random streams.
    pub fn id(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgoKind {
    type Err = MnlError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        AlgoKind::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| {
                let known: Vec<_> = AlgoKind::ALL.iter().map(|a| a.name()).collect();
                MnlError::Config(format!("unknown algorithm {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub algorithms: Vec<AlgoKind>,
    pub env: EnvironmentConfig,
    pub delta: f64,
    pub runs: usize,
    pub seed: u64,
    /// Multiplier on the warm-up threshold `τ_t`.
    pub tau_multiplier: f64,
    /// Baseline exploration scale `c` in `α₀ = c·√(d·log(t+1))`.
    pub baseline_c: f64,
    /// Baseline design-matrix regularizer `λ₀`.
    pub baseline_lambda: f64,
    /// Record per-round wall-clock; when off the timing column is zero and
    /// the output depends only on the seed.
    pub timing: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![
                AlgoKind::OfuMnlPlusPlus,
                AlgoKind::OfuMleMnl,
                AlgoKind::UcbMnl,
                AlgoKind::TsMnl,
            ],
            env: EnvironmentConfig {
                n_items: 50,
                max_size: 5,
                dim: 5,
                bound: 1.0,
                horizon: 3000,
            },
            delta: 0.1,
            runs: 20,
            seed: 0,
            tau_multiplier: 1.0,
            baseline_c: 1.0,
            baseline_lambda: 1.0,
            timing: true,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| MnlError::Config(format!("bad value {value:?} for {key}")))
}

impl ExperimentConfig {
    /// Keys accepted by [`ExperimentConfig::set`], in manifest order.
    pub const KEYS: [&'static str; 14] = [
        "algorithms",
        "T",
        "N",
        "K",
        "d",
        "B",
        "delta",
        "runs",
        "seed",
        "tau_multiplier",
        "baseline_c",
        "baseline_lambda",
        "timing",
        "out",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "algorithms" | "algos" => {
                self.algorithms = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?;
            }
            "T" | "horizon" => self.env.horizon = parse(key, value)?,
            "N" | "n_items" => self.env.n_items = parse(key, value)?,
            "K" | "max_size" => self.env.max_size = parse(key, value)?,
            "d" | "dim" => self.env.dim = parse(key, value)?,
            "B" | "bound" => self.env.bound = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "tau_multiplier" | "tau_mult" => self.tau_multiplier = parse(key, value)?,
            "baseline_c" => self.baseline_c = parse(key, value)?,
            "baseline_lambda" => self.baseline_lambda = parse(key, value)?,
            "timing" => self.timing = parse(key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            other => return Err(MnlError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_str(text)?;
        Ok(cfg)
    }

    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MnlError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| MnlError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.algorithms.is_empty() {
            return Err(MnlError::Config("no algorithms selected".into()));
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return Err(MnlError::Config("an algorithm is listed twice".into()));
        }
        if self.runs == 0 {
            return Err(MnlError::Config("runs must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(MnlError::Config(format!("delta = {} outside (0, 1]", self.delta)));
        }
        if !(self.tau_multiplier > 0.0) || !self.tau_multiplier.is_finite() {
            return Err(MnlError::Config("tau_multiplier must be positive".into()));
        }
        if !(self.baseline_c >= 0.0) || !(self.baseline_lambda > 0.0) {
            return Err(MnlError::Config("need baseline_c >= 0 and baseline_lambda > 0".into()));
        }
        Ok(())
    }

    /// `key=value` lines for every resolved setting, in [`Self::KEYS`] order.
    pub fn to_kv_string(&self) -> String {
        let algos: Vec<_> = self.algorithms.iter().map(|a| a.name()).collect();
        let out = self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let values = [
            algos.join(","),
            self.env.horizon.to_string(),
            self.env.n_items.to_string(),
            self.env.max_size.to_string(),
            self.env.dim.to_string(),
            self.env.bound.to_string(),
            self.delta.to_string(),
            self.runs.to_string(),
            self.seed.to_string(),
            self.tau_multiplier.to_string(),
            self.baseline_c.to_string(),
            self.baseline_lambda.to_string(),
            self.timing.to_string(),
            out,
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_comments() {
        let cfg = ExperimentConfig::from_kv_str(
            "# small run\nalgorithms = ofu-mnl++, greedy\nT=10\nN = 8 # items\nK=2\nB = 2.5\nruns=3\ntiming=false\n",
        )
        .unwrap();
        assert_eq!(cfg.algorithms, vec![AlgoKind::OfuMnlPlusPlus, AlgoKind::Greedy]);
        assert_eq!(cfg.env.horizon, 10);
        assert_eq!(cfg.env.n_items, 8);
        assert_eq!(cfg.env.max_size, 2);
        assert_eq!(cfg.env.bound, 2.5);
        assert_eq!(cfg.runs, 3);
        assert!(!cfg.timing);
        assert_eq!(cfg.env.dim, 5);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_kv_str("colour = red").is_err());
        assert!(ExperimentConfig::from_kv_str("T = many").is_err());
        assert!(ExperimentConfig::from_kv_str("algorithms = epsilon-greedy").is_err());
        assert!(ExperimentConfig::from_kv_str("just words").is_err());
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut cfg = ExperimentConfig::default();
        cfg.env.max_size = 60;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.delta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.algorithms = vec![AlgoKind::TsMnl, AlgoKind::TsMnl];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn manifest_roundtrips() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("algorithms", "ts-mnl,ucb-mnl").unwrap();
        cfg.set("tau_multiplier", "0.05").unwrap();
        cfg.set("out", "/tmp/x.csv").unwrap();
        let back = ExperimentConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }
}
