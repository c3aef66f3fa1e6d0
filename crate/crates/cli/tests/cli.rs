use std::path::Path;
use std::process::{Command, Output};

fn mnlbandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mnlbandit")).args(args).output().unwrap()
}

fn config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/smoke.conf")
        .display()
        .to_string()
}

#[test]
fn run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = mnlbandit(&["run", "--config", &config(), "--T", "20", "--algo", "greedy", "--algo", "ucb-mnl", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("algo,t,mean_cum_regret,band2sd,mean_round_ms,warmup_frac"));
    assert_eq!(lines.count(), 2 * 20);
    let manifest = std::fs::read_to_string(dir.path().join("r.csv.manifest")).unwrap();
    // flags win over the file
    assert!(manifest.lines().any(|l| l == "T=20"));
    assert!(manifest.lines().any(|l| l == "algorithms=greedy,ucb-mnl"));
}

#[test]
fn bad_input_fails_cleanly() {
    let o = mnlbandit(&["run", "--config", &config(), "--K", "0", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = mnlbandit(&["run", "--config", &config(), "--algo", "nope"]);
    assert!(!o.status.success());
    let o = mnlbandit(&["run", "--config", "/nonexistent.conf"]);
    assert_eq!(o.status.code(), Some(1));
}
