use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn lrex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn smoke() -> String {
    configs().join("smoke.toml").display().to_string()
}

fn simulate_into(dir: &Path, extra: &[&str]) -> Output {
    let (cfg, out) = (smoke(), dir.display().to_string());
    let mut args = vec!["--config", cfg.as_str(), "--out", out.as_str(), "simulate"];
    args.extend_from_slice(extra);
    lrex(&args)
}

#[test]
fn same_seed_gives_identical_csv() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    simulate_into(a.path(), &[]);
    simulate_into(b.path(), &["--threads", "2"]);
    let ta = fs::read(a.path().join("trajectories.csv")).unwrap();
    let tb = fs::read(b.path().join("trajectories.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
}

#[test]
fn different_seed_changes_output() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    simulate_into(a.path(), &[]);
    simulate_into(b.path(), &["--seed", "8"]);
    let ta = fs::read(a.path().join("trajectories.csv")).unwrap();
    let tb = fs::read(b.path().join("trajectories.csv")).unwrap();
    assert_ne!(ta, tb);
}

#[test]
fn replica_subset_reproduces_its_rows() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    simulate_into(a.path(), &["--replicas", "8"]);
    simulate_into(b.path(), &["--replicas", "3"]);
    let full = fs::read_to_string(a.path().join("trajectories.csv")).unwrap();
    let part = fs::read_to_string(b.path().join("trajectories.csv")).unwrap();
    let prefix: Vec<&str> = full
        .lines()
        .filter(|l| l.starts_with("replica") || l.split(',').next().unwrap().parse::<usize>().is_ok_and(|r| r < 3))
        .collect();
    assert_eq!(prefix, part.lines().collect::<Vec<_>>());
}

#[test]
fn csv_columns_follow_documented_order() {
    let dir = TempDir::new().unwrap();
    simulate_into(dir.path(), &["--replicas", "1"]);
    let text = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "replica,t,Y,drift_int,A,A_hat,R,M,QV,A_eps_0.25"
    );
    // checkpoints 0, 0.1 and t_max = 0.2
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn event_dump_is_ndjson() {
    let dir = TempDir::new().unwrap();
    let o = simulate_into(dir.path(), &["--replicas", "2", "--dump-events"]);
    assert_ne!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("events/replica_00001.ndjson")).unwrap();
    let mut last = 0.0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let t = v["t"].as_f64().unwrap();
        assert!(t >= last && t <= 0.2);
        assert!(v["x"].is_u64() && v["y"].is_u64());
        last = t;
    }
    assert!(last > 0.0);
}

#[test]
fn missing_kernel_block_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[sim]\nn = 16\n").unwrap();
    let o = lrex(&["--config", cfg.to_str().unwrap(), "validate-kernel"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`kernel`"), "{err}");
}

#[test]
fn invalid_kernel_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "[kernel]\nfamily = \"explicit\"\ndomination_c = 1.0\n[kernel.s]\n1 = 0.5\n-1 = 0.4\n[kernel.a]\n",
    )
    .unwrap();
    let o = lrex(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "validate-kernel"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kernel"));
}

#[test]
fn check_lemmas_passes_for_nearest_neighbour() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("lemmas.toml");
    let summary = dir.path().join("s.json");
    let o = lrex(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--json-summary",
        summary.to_str().unwrap(),
        "check-lemmas",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let entries: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(!entries.is_empty());
    for e in &entries {
        for key in ["name", "value", "bound", "se", "pass"] {
            assert!(e.get(key).is_some(), "{e}");
        }
        assert_eq!(e["pass"], true);
    }
    assert!(dir.path().join("appendix_errors.csv").exists());
    assert!(dir.path().join("enumeration.csv").exists());
}

#[test]
fn failing_assertion_sets_exit_status() {
    // eight solver replicas cannot pin mode variances to 10%
    let dir = TempDir::new().unwrap();
    let smoke = smoke();
    let o = lrex(&["--config", smoke.as_str(), "--out", dir.path().to_str().unwrap(), "sbe"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL mode variance"));
}

#[test]
fn run_executes_listed_suites() {
    let dir = TempDir::new().unwrap();
    let smoke = smoke();
    let o = lrex(&["--config", smoke.as_str(), "--out", dir.path().to_str().unwrap(), "run"]);
    assert_ne!(o.status.code(), Some(2));
    assert!(dir.path().join("kernel.json").exists());
    assert!(dir.path().join("trajectories.csv").exists());
}
