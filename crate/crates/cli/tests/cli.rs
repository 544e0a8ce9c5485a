use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nanogrid_cli::commands::{cmd_compare, cmd_run, cmd_sweep, SweepParam};
use nanogrid_cli::config::RunConfig;
use nanogrid_core::baselines::CaseId;
use nanogrid_core::scenario_io::{load_scenario_file, save_scenario};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn nanogrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nanogrid")).args(args).output().unwrap()
}

fn small(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.synthetic_mut().unwrap().slots = 12;
    cfg.output.dir = dir.to_path_buf();
    cfg
}

#[test]
fn bundled_scenario_round_trips() {
    let path = data("example_scenario.csv");
    let scenario = load_scenario_file::<f64>(&path).unwrap();
    assert_eq!((scenario.n(), scenario.slots()), (5, 24));
    let mut out = Vec::new();
    save_scenario(&scenario, &mut out).unwrap();
    assert_eq!(out, fs::read(&path).unwrap());
}

#[test]
fn bundled_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&data("example.toml")).unwrap();
    cfg.output.dir = dir.path().to_path_buf();
    let art = cmd_run(&cfg).unwrap();
    assert_eq!(art.summary.nanogrids, 5);
    assert_eq!(art.summary.violations.comfort, 0);
    for name in ["summary.json", "summary.txt", "series.csv", "timing.csv"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let text = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("aggregate_cost = ")));
    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 25);
    assert_eq!(art.slot_ms.len(), 24);
}

#[test]
fn traces_are_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.output.traces = true;
    cmd_run(&cfg).unwrap();
    let traces: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("traces.json")).unwrap()).unwrap();
    assert_eq!(traces.as_array().unwrap().len(), 12);
}

#[test]
fn compare_leaves_cooperative_prices_blank() {
    let dir = tempfile::tempdir().unwrap();
    let art = cmd_compare(&small(dir.path()), &[CaseId::Proposed, CaseId::SocialWelfare]).unwrap();
    assert!(art.rows[0].trading_profit.is_some());
    assert!(art.rows[1].trading_profit.is_none() && art.rows[1].energy_cost.is_none());
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("5,social-welfare,,,"));
}

#[test]
fn sweep_skips_invalid_points() {
    let dir = tempfile::tempdir().unwrap();
    let art = cmd_sweep(&small(dir.path()), SweepParam::Gamma, &[0.01, -1.0]).unwrap();
    assert!(art.points[0].summary.is_some());
    assert!(art.points[1].summary.is_none() && art.points[1].status.starts_with("skipped"));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn nanogrid_sweep_nests_the_community() {
    let dir = tempfile::tempdir().unwrap();
    let art = cmd_sweep(&small(dir.path()), SweepParam::N, &[1.0, 2.0, 4.0, 8.0]).unwrap();
    let profits: Vec<f64> = art.points.iter().map(|p| p.summary.as_ref().unwrap().totals.pme_profit).collect();
    assert!(profits.windows(2).all(|w| w[1] >= w[0]), "{profits:?}");
    let timing = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 5);
}

#[test]
fn nanogrid_sweep_truncates_a_file_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&data("example.toml")).unwrap();
    cfg.output.dir = dir.path().to_path_buf();
    let art = cmd_sweep(&cfg, SweepParam::N, &[2.0, 5.0, 6.0]).unwrap();
    assert_eq!(art.points[0].summary.as_ref().unwrap().nanogrids, 2);
    assert!(art.points[2].summary.is_none());
}

#[test]
fn check_bounds_prints_every_nanogrid() {
    let out = nanogrid(&["check-bounds"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("v_p_max") && text.lines().count() == 8, "{text}");
}

#[test]
fn weight_above_its_bound_fails_with_the_bound_named() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[controls]\nv = [10.0]\n").unwrap();
    let out = nanogrid(&["run", "-c", config.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("v_max"));
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[game]\nbogus = 1\n").unwrap();
    let out = nanogrid(&["run", "-c", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn gen_scenario_writes_a_loadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let out = nanogrid(&["gen-scenario", "--seed", "9", "--n", "3", "--slots", "6", "-o", path.to_str().unwrap()]);
    assert!(out.status.success());
    let scenario = load_scenario_file::<f64>(&path).unwrap();
    assert_eq!((scenario.n(), scenario.slots()), (3, 6));
}

#[test]
fn cases_accept_numbers_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "[scenario.synthetic]\nslots = 6\n").unwrap();
    let out = nanogrid(&[
        "compare",
        "-c",
        config.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
        "--cases",
        "1,proposed",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
