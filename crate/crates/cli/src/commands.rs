//! The five command verbs. Each writes its artifacts into the output directory
//! and returns what it wrote so callers (and tests) can inspect it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use nanogrid_core::baselines::{run_case, CaseId};
use nanogrid_core::scenario_io::{generate_synthetic, save_scenario_file, SyntheticSpec};
use nanogrid_core::simulator::{
    simulate, ControlBounds, Controls, RunOptions, RunReport, SlotDecision, Totals, Violations,
};
use nanogrid_core::stackelberg::solve_slot;

use crate::config::{Resolved, RunConfig};

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub nanogrids: usize,
    pub slots: usize,
    pub controls: Controls<f64>,
    pub bounds: ControlBounds<f64>,
    pub totals: Totals<f64>,
    pub violations: Violations,
    pub non_converged_slots: usize,
    pub median_iterations: f64,
    pub max_iterations: usize,
}

impl RunSummary {
    pub fn new(resolved: &Resolved, report: &RunReport<f64>) -> Self {
        let iters = report.iterations();
        RunSummary {
            nanogrids: resolved.setup.n(),
            slots: resolved.setup.scenario().slots(),
            controls: resolved.controls.clone(),
            bounds: resolved.bounds.clone(),
            totals: report.totals,
            violations: report.violations,
            non_converged_slots: report.non_converged_slots,
            median_iterations: median(&iters),
            max_iterations: iters.iter().copied().max().unwrap_or(0),
        }
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let t = &self.totals;
        let mut s = String::new();
        let rows: [(&str, String); 16] = [
            ("nanogrids", self.nanogrids.to_string()),
            ("slots", self.slots.to_string()),
            ("pme_profit", t.pme_profit.to_string()),
            ("energy_cost", t.energy_cost.to_string()),
            ("discomfort_cost", t.discomfort_cost.to_string()),
            ("aggregate_cost", t.aggregate_cost.to_string()),
            ("tatd", t.tatd.to_string()),
            ("hvac_energy", t.hvac_energy.to_string()),
            ("grid_cost", t.grid_cost.to_string()),
            ("battery_cost", t.battery_cost.to_string()),
            ("comfort_violations", self.violations.comfort.to_string()),
            ("battery_violations", self.violations.battery.to_string()),
            ("queue_identity_violations", self.violations.queue_identity.to_string()),
            ("non_converged_slots", self.non_converged_slots.to_string()),
            ("median_iterations", self.median_iterations.to_string()),
            ("max_iterations", self.max_iterations.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

pub fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        0.5 * (v[mid - 1] + v[mid]) as f64
    }
}

/// Artifacts of `run`.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub report: RunReport<f64>,
    /// Solver wall time of each slot, in milliseconds.
    pub slot_ms: Vec<f64>,
    pub files: Vec<PathBuf>,
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    files.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Per-slot series: prices, charge, battery, grid residual and profit, then
/// consumption, injection and end-of-slot temperature of every nanogrid.
pub fn series_csv(report: &RunReport<f64>) -> Result<String> {
    let n = report.outcomes.first().map_or(0, |o| o.followers.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["slot", "p_s", "p_b", "y", "battery", "grid_residual", "pme_profit", "converged", "iterations"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    for i in 0..n {
        header.extend([format!("e_{i}"), format!("tp_{i}"), format!("t_{i}"), format!("discomfort_{i}")]);
    }
    w.write_record(&header)?;
    for o in &report.outcomes {
        let mut row = vec![
            o.slot.to_string(),
            o.leader.p_s.to_string(),
            o.leader.p_b.to_string(),
            o.leader.y.to_string(),
            o.next.e_batt.to_string(),
            o.grid_residual.to_string(),
            o.pme_profit.to_string(),
            o.converged.to_string(),
            o.iterations.to_string(),
        ];
        for (i, f) in o.followers.iter().enumerate() {
            row.extend([f.e.to_string(), f.tp.to_string(), o.next.t[i].to_string(), o.discomfort[i].to_string()]);
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Simulates the proposed game, timing each slot.
pub fn simulate_timed(resolved: &Resolved, cfg: &RunConfig, strict: bool) -> Result<(RunReport<f64>, Vec<f64>)> {
    let Resolved { setup, controls, .. } = resolved;
    let mut game = cfg.game;
    game.record_trace = cfg.output.traces;
    let scenario = setup.scenario();
    let mut slot_ms = Vec::with_capacity(scenario.slots());
    let options = RunOptions { strict, keep_traces: cfg.output.traces };
    let report = simulate(setup, controls, &setup.midpoint_start(), options, |k, state| {
        let start = Instant::now();
        let sol = solve_slot(
            state,
            &scenario.nanogrid_slots(k),
            &scenario.market(k),
            setup.nanogrids(),
            &controls.nanogrids,
            setup.pme(),
            &controls.pme,
            setup.mode(),
            &game,
        )?;
        slot_ms.push(start.elapsed().as_secs_f64() * 1e3);
        Ok(SlotDecision {
            leader: sol.leader,
            followers: sol.actions(),
            converged: sol.converged,
            iterations: sol.iterations,
            trace: sol.trace,
        })
    })?;
    Ok((report, slot_ms))
}

/// `run`: simulate the proposed strategy and write summary, series, timing and
/// optionally the solver traces. Any bound or identity violation aborts.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunArtifacts> {
    let resolved = cfg.resolve()?;
    let (report, slot_ms) = simulate_timed(&resolved, cfg, true)?;
    let summary = RunSummary::new(&resolved, &report);
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut files = Vec::new();
    write(dir, "summary.json", &to_json(&summary)?, &mut files)?;
    write(dir, "summary.txt", &summary.to_text(), &mut files)?;
    write(dir, "series.csv", &series_csv(&report)?, &mut files)?;
    let mut timing = String::from("slot,wall_ms\n");
    for (k, ms) in slot_ms.iter().enumerate() {
        let _ = writeln!(timing, "{k},{ms:.3}");
    }
    write(dir, "timing.csv", &timing, &mut files)?;
    if cfg.output.traces {
        let traces: Vec<_> = report.outcomes.iter().map(|o| (o.slot, &o.trace)).collect();
        write(dir, "traces.json", &to_json(&traces)?, &mut files)?;
    }
    Ok(RunArtifacts { summary, report, slot_ms, files })
}

/// One row of the comparison table. Profit and energy cost are absent for the
/// cooperative case, which has no internal prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRow {
    pub case: usize,
    pub label: &'static str,
    pub trading_profit: Option<f64>,
    pub energy_cost: Option<f64>,
    pub discomfort_cost: f64,
    pub aggregate_cost: f64,
    pub tatd: f64,
    pub violations: Violations,
}

#[derive(Debug, Clone)]
pub struct CompareArtifacts {
    pub rows: Vec<CaseRow>,
    pub reports: Vec<(CaseId, RunReport<f64>)>,
    pub files: Vec<PathBuf>,
}

pub fn compare_cases(resolved: &Resolved, cfg: &RunConfig, cases: &[CaseId]) -> Result<Vec<(CaseId, RunReport<f64>)>> {
    let Resolved { setup, controls, .. } = resolved;
    let options = RunOptions { strict: false, keep_traces: false };
    cases.iter().map(|&c| Ok((c, run_case(c, setup, controls, &cfg.game, &setup.midpoint_start(), options)?))).collect()
}

pub fn case_row(case: CaseId, report: &RunReport<f64>) -> CaseRow {
    let t = &report.totals;
    let priced = case.has_prices();
    CaseRow {
        case: case.number(),
        label: case.label(),
        trading_profit: priced.then_some(t.pme_profit),
        energy_cost: priced.then_some(t.energy_cost),
        discomfort_cost: t.discomfort_cost,
        aggregate_cost: t.aggregate_cost,
        tatd: t.tatd,
        violations: report.violations,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `compare`: one row per case with the columns of the comparison table plus TATD.
pub fn cmd_compare(cfg: &RunConfig, cases: &[CaseId]) -> Result<CompareArtifacts> {
    if cases.is_empty() {
        bail!("no cases to compare");
    }
    let resolved = cfg.resolve()?;
    let reports = compare_cases(&resolved, cfg, cases)?;
    let rows: Vec<CaseRow> = reports.iter().map(|(c, r)| case_row(*c, r)).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case", "label", "trading_profit", "energy_cost", "discomfort_cost", "aggregate_cost", "tatd"])?;
    for r in &rows {
        w.write_record([
            r.case.to_string(),
            r.label.to_string(),
            cell(r.trading_profit),
            cell(r.energy_cost),
            r.discomfort_cost.to_string(),
            r.aggregate_cost.to_string(),
            r.tatd.to_string(),
        ])?;
    }
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    write(dir, "compare.csv", &String::from_utf8(w.into_inner()?)?, &mut files)?;
    write(dir, "compare.json", &to_json(&rows)?, &mut files)?;
    Ok(CompareArtifacts { rows, reports, files })
}

/// Parameter varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Gamma,
    Epsilon,
    TMin,
    TMax,
    N,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Epsilon => "epsilon",
            SweepParam::TMin => "t_min",
            SweepParam::TMax => "t_max",
            SweepParam::N => "n",
        }
    }

    /// Configuration with the parameter set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::Gamma => cfg.params.gamma = Some(value),
            SweepParam::Epsilon => cfg.params.epsilon = Some(vec![value]),
            SweepParam::TMin => cfg.params.t_min = Some(value),
            SweepParam::TMax => cfg.params.t_max = Some(value),
            SweepParam::N => {
                let n = value as usize;
                cfg.scenario.nanogrids = Some(n);
                let p = &mut cfg.params;
                let c = &mut cfg.controls;
                for list in [&mut p.epsilon, &mut c.v, &mut c.gamma_shift].into_iter().flatten() {
                    if list.len() > n {
                        list.truncate(n);
                    }
                }
            }
        }
        Ok(cfg)
    }

    /// Base configuration shared by every point. For `n` the synthetic
    /// scenario is generated once at the largest size so that each point keeps
    /// the nanogrids of the smaller ones.
    pub fn prepare(self, base: &RunConfig, values: &[f64]) -> Result<RunConfig> {
        let mut cfg = base.clone();
        if self == SweepParam::N {
            if let Some(v) = values.iter().find(|v| **v < 1.0 || v.fract() != 0.0) {
                bail!("n must be a positive integer, got {v}");
            }
            if cfg.scenario.file.is_none() {
                let largest = values.iter().fold(0.0f64, |a, &b| a.max(b)) as usize;
                let spec = cfg.synthetic_mut()?;
                spec.n = spec.n.max(largest);
            }
        }
        Ok(cfg)
    }
}

/// One sweep point; `summary` is `None` when the value was skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub status: String,
    pub summary: Option<RunSummary>,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SweepArtifacts {
    pub points: Vec<SweepPoint>,
    pub files: Vec<PathBuf>,
}

/// `sweep`: one proposed-strategy run per value. Values that break the
/// modelling assumptions are reported as skipped rows.
pub fn cmd_sweep(cfg: &RunConfig, param: SweepParam, values: &[f64]) -> Result<SweepArtifacts> {
    if values.is_empty() {
        bail!("no sweep values");
    }
    let base = param.prepare(cfg, values)?;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let point_cfg = param.apply(&base, value)?;
        let resolved = match point_cfg.resolve() {
            Ok(r) => r,
            Err(e) => {
                eprintln!("warning: skipping {} = {value}: {e:#}", param.name());
                points.push(SweepPoint { value, status: format!("skipped: {e:#}"), summary: None, wall_ms: 0.0 });
                continue;
            }
        };
        let start = Instant::now();
        let (report, _) = simulate_timed(&resolved, &point_cfg, false)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        points.push(SweepPoint {
            value,
            status: "ok".into(),
            summary: Some(RunSummary::new(&resolved, &report)),
            wall_ms,
        });
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        param.name(),
        "status",
        "pme_profit",
        "energy_cost",
        "discomfort_cost",
        "aggregate_cost",
        "tatd",
        "hvac_energy",
        "comfort_violations",
        "battery_violations",
        "median_iterations",
    ])?;
    for p in &points {
        let mut row = vec![p.value.to_string(), p.status.clone()];
        match &p.summary {
            Some(s) => {
                let t = &s.totals;
                row.extend(
                    [t.pme_profit, t.energy_cost, t.discomfort_cost, t.aggregate_cost, t.tatd, t.hvac_energy]
                        .map(|x| x.to_string()),
                );
                row.extend([
                    s.violations.comfort.to_string(),
                    s.violations.battery.to_string(),
                    s.median_iterations.to_string(),
                ]);
            }
            None => row.extend(std::iter::repeat_n(String::new(), 9)),
        }
        w.write_record(&row)?;
    }
    let mut timing = format!("{},wall_ms\n", param.name());
    for p in &points {
        let _ = writeln!(timing, "{},{:.3}", p.value, p.wall_ms);
    }

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    write(dir, "sweep.csv", &String::from_utf8(w.into_inner()?)?, &mut files)?;
    write(dir, "sweep.json", &to_json(&points)?, &mut files)?;
    write(dir, "timing.csv", &timing, &mut files)?;
    Ok(SweepArtifacts { points, files })
}

/// `check-bounds`: the admissible tuning ranges and the controls in effect.
pub fn cmd_check_bounds(cfg: &RunConfig) -> Result<String> {
    let resolved = cfg.resolve()?;
    Ok(bounds_text(&resolved))
}

pub fn bounds_text(resolved: &Resolved) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nanogrid  v          v_max      gamma_shift  gamma_min    gamma_max    omega_max");
    for (i, (c, b)) in resolved.controls.nanogrids.iter().zip(&resolved.bounds.nanogrids).enumerate() {
        let _ = writeln!(
            s,
            "{i:<8}  {:<9.6}  {:<9.6}  {:<11.6}  {:<11.6}  {:<11.6}  {:.6}",
            c.v, b.v_max, c.gamma_shift, b.gamma_min, b.gamma_max, b.omega_max
        );
    }
    let (c, b) = (&resolved.controls.pme, &resolved.bounds.pme);
    let _ = writeln!(s, "pme       v_p = {:.6}  v_p_max = {:.6}", c.v_p, b.v_p_max);
    let _ =
        writeln!(s, "          theta = {:.6}  theta_min = {:.6}  theta_max = {:.6}", c.theta, b.theta_min, b.theta_max);
    s
}

/// `gen-scenario`: writes the synthetic scenario as CSV.
pub fn cmd_gen_scenario(spec: &SyntheticSpec, path: &Path) -> Result<()> {
    let syn = generate_synthetic::<f64>(spec)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_scenario_file(&syn.scenario, path)?;
    Ok(())
}
