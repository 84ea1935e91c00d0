use std::path::{Path, PathBuf};
use std::process::Command;

use evcs_core::mitigate::{Method, Strategy};
use evcs_harness::commands::{self, Prepared};
use evcs_harness::config::{attack_preset, ScenarioConfig};
use evcs_harness::plot::{emit_plots, PLOT_FILES};
use evcs_harness::series::{Provenance, TimeSeries, COLUMNS};
use evcs_harness::{HarnessError, Phase, StatsError};

fn evcs(args: &[&str], root: Option<&Path>) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_evcs"));
    cmd.args(args).env_remove("EVCS_OUTPUT_ROOT");
    if let Some(r) = root {
        cmd.env("EVCS_OUTPUT_ROOT", r);
    }
    let out = cmd.output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

fn write_config(dir: &Path, attack: &str, strategy: Method) -> PathBuf {
    let mut cfg = ScenarioConfig::with_attack(attack_preset(attack).unwrap());
    cfg.strategy = Strategy::uniform(strategy);
    cfg.output_dir = dir.join("out");
    let path = dir.join(format!("{attack}-{strategy}.toml"));
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn calibrate_then_run_writes_schema_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    let (code, _, err) = evcs(&["calibrate", "--attack", "type1-diff", "--strategy", "clone", "--out", cfg.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(code, 0, "{err}");
    let (code, stdout, err) = evcs(&["run", "--config", cfg.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("timeseries.csv"));
    let out = tmp.path().join("out");
    let text = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, COLUMNS.join(","));
    for key in ["# tool evcs-harness", "# config_hash ", "# seed 1"] {
        assert!(text.contains(key), "missing {key}");
    }
    for f in PLOT_FILES {
        let svg = std::fs::read_to_string(out.join(f)).unwrap();
        assert!(svg.starts_with("<svg"));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = write_config(d.path(), "type1-sim", Method::BruteForce);
        let (code, _, err) = evcs(&["run", "--config", cfg.to_str().unwrap()], None);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["timeseries.csv", "timeseries_unmitigated.csv", "stats.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn stats_subcommand_reproduces_run_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "type2-diff", Method::Clone);
    assert_eq!(evcs(&["run", "--config", cfg.to_str().unwrap()], None).0, 0);
    let out = tmp.path().join("out");
    let input = out.join("timeseries.csv");
    let companion = out.join("timeseries_unmitigated.csv");
    let (code, stdout, err) = evcs(&["stats", "--input", input.to_str().unwrap(), "--companion", companion.to_str().unwrap()], None);
    assert_eq!(code, 0, "{err}");
    assert_eq!(stdout, std::fs::read_to_string(out.join("stats.csv")).unwrap());
}

#[test]
fn compare_rows_cover_each_strategy_and_brute_force_is_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "type2-sim", Method::BruteForce);
    let (code, _, err) = evcs(&["compare", "--config", cfg.to_str().unwrap(), "--strategies", "legacy_only,brute_force,clone"], None);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(tmp.path().join("out/compare/compare_stats.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').collect()).collect();
    for s in ["legacy_only", "brute_force", "clone"] {
        assert!(rows.iter().any(|r| r[0] == s && r[1] == "p_pv" && r[2] == "attack"));
    }
    let bf = rows.iter().find(|r| r[0] == "brute_force" && r[1] == "d_pv" && r[2] == "mitigation").unwrap();
    assert_eq!(&bf[4..9], &["0.2"; 5]);
    assert!(tmp.path().join("out/compare/compare_duties.svg").exists());
}

#[test]
fn errors_are_single_machine_parsable_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "type1-diff", Method::Td3);
    let (code, _, err) = evcs(&["run", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(code, 1);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[missing_bundle]: "), "{err}");

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "duration = -1.0\n").unwrap();
    let (code, _, err) = evcs(&["run", "--config", bad.to_str().unwrap()], None);
    assert_eq!(code, 1);
    assert!(err.starts_with("error[config]: "), "{err}");
}

#[test]
fn output_root_override_redirects_relative_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::with_attack(None);
    cfg.strategy = Strategy::uniform(Method::LegacyOnly);
    let path = tmp.path().join("rel.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let (code, _, err) = evcs(&["run", "--config", path.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(code, 0, "{err}");
    assert!(tmp.path().join("out/timeseries.csv").exists());
    assert!(!tmp.path().join("out/timeseries_unmitigated.csv").exists());
}

#[test]
fn normal_phase_power_matches_the_calibration_target() {
    let mut cfg = ScenarioConfig::with_attack(attack_preset("type1-diff").unwrap());
    cfg.strategy = Strategy::uniform(Method::Clone);
    let p = Prepared::new(cfg).unwrap();
    let log = commands::simulate_in_memory(&p, &p.config.strategy, &Default::default()).unwrap();
    let ts = TimeSeries::from_log(&log, Provenance::new(&p.hash, 1, Some(&p.config.strategy), p.config.attack.as_ref()));
    let stats = evcs_harness::series::run_stats(&ts, None).unwrap();
    let median = stats.get("p_pv", Phase::Normal).unwrap().median;
    assert!((median / 1043.5996 - 1.0).abs() < 0.01, "median {median}");
}

#[test]
fn empty_log_yields_no_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let ts = TimeSeries { provenance: Provenance::new("x", 0, None, None), records: vec![] };
    let err = emit_plots(&ts, tmp.path()).unwrap_err();
    assert!(matches!(err, HarnessError::Stats(StatsError::EmptyPhase { .. })));
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
}
