//! CSV and manifest emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::runner::{agent_stream, choice_stream, AggregateResult};
use crate::error::{MnlError, Result};

pub const CSV_HEADER: &str = "algo,t,mean_cum_regret,band2sd,mean_round_ms,warmup_frac";

/// Decimal rendering with 12 significant digits.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub algo: String,
    pub t: usize,
    pub mean_cum_regret: f64,
    pub band2sd: f64,
    pub mean_round_ms: f64,
    pub warmup_frac: f64,
}

pub fn format_csv(result: &AggregateResult) -> String {
    let mut out = String::with_capacity(64 * result.horizon * result.series.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &result.series {
        for t in 0..result.horizon {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.algo.name(),
                t + 1,
                format_sig12(s.mean_cum_regret[t]),
                format_sig12(s.band2sd[t]),
                format_sig12(s.mean_round_ms[t]),
                format_sig12(s.warmup_frac[t]),
            ));
        }
    }
    out
}

pub fn emit_csv(result: &AggregateResult, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(format_csv(result).as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(MnlError::Config(format!("unexpected CSV header {other:?}"))),
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || MnlError::Config(format!("CSV line {}: {line:?}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(CsvRow {
                algo: f[0].to_string(),
                t: f[1].parse().map_err(|_| bad())?,
                mean_cum_regret: num(f[2])?,
                band2sd: num(f[3])?,
                mean_round_ms: num(f[4])?,
                warmup_frac: num(f[5])?,
            })
        })
        .collect()
}

/// `results.csv` → `results.csv.manifest`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

/// Resolved configuration plus the seed layout and per-replica stream hashes.
pub fn format_manifest(cfg: &ExperimentConfig, result: &AggregateResult) -> String {
    let mut out = cfg.to_kv_string();
    out.push_str("rng=chacha8 key=seed stream=replica*64+purpose\n");
    out.push_str("stream.parameter=0\nstream.contexts=1\n");
    for &a in &cfg.algorithms {
        out.push_str(&format!("stream.choice.{}={}\n", a.name(), choice_stream(a)));
        out.push_str(&format!("stream.agent.{}={}\n", a.name(), agent_stream(a)));
    }
    for (r, h) in result.stream_hashes.iter().enumerate() {
        out.push_str(&format!("context_hash.{r}={h:016x}\n"));
    }
    out
}

pub fn write_manifest(cfg: &ExperimentConfig, result: &AggregateResult, path: &Path) -> Result<()> {
    std::fs::write(path, format_manifest(cfg, result))?;
    Ok(())
}

/// Algorithms present in parsed rows, in first-appearance order.
pub fn algorithms_in(rows: &[CsvRow]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for r in rows {
        if !seen.contains(&r.algo) {
            seen.push(r.algo.clone());
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(1.0), "1.00000000000");
        assert_eq!(format_sig12(1234.5), "1234.50000000");
        assert_eq!(format_sig12(0.000123456789012345), "0.000123456789012");
        assert_eq!(format_sig12(-2.5), "-2.50000000000");
        assert_eq!(format_sig12(123456789012345.0), "123456789012345");
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("out/r.csv")), PathBuf::from("out/r.csv.manifest"));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_csv("algo,t\nx,1\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\nx,1,2\n")).is_err());
    }
}
