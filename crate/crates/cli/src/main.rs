use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use nanogrid_cli::commands::{self, SweepParam};
use nanogrid_cli::config::RunConfig;
use nanogrid_core::baselines::CaseId;
use nanogrid_core::scenario_io::SyntheticSpec;

/// Online energy management for HVAC nanogrids and a shared battery.
#[derive(Parser)]
#[command(name = "nanogrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; without it the default synthetic scenario is used.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the proposed strategy over the whole horizon.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write every solver iterate to traces.json.
        #[arg(long)]
        traces: bool,
        /// Print the admissible tuning ranges and stop.
        #[arg(long)]
        check_bounds: bool,
    },
    /// Run several strategies on the same scenario.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Case numbers or labels (1 fixed-point, 2 inelastic, 3 myopic, 4 proposed, 5 social-welfare).
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        cases: Vec<CaseId>,
    },
    /// Repeat the proposed run over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Print the admissible tuning ranges.
    CheckBounds {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic scenario as CSV.
    GenScenario {
        #[arg(long, default_value_t = SyntheticSpec::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = SyntheticSpec::default().n)]
        n: usize,
        #[arg(long, default_value_t = SyntheticSpec::default().slots)]
        slots: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, traces, check_bounds } => {
            let mut cfg = common.load()?;
            if check_bounds {
                print!("{}", commands::cmd_check_bounds(&cfg)?);
                return Ok(());
            }
            cfg.output.traces |= traces;
            let art = commands::cmd_run(&cfg)?;
            print!("{}", art.summary.to_text());
            eprintln!("wrote {}", cfg.output.dir.display());
        }
        Command::Compare { common, cases } => {
            let cfg = common.load()?;
            let art = commands::cmd_compare(&cfg, &cases)?;
            for r in &art.rows {
                println!(
                    "case {} {:<15} aggregate = {:.4}  discomfort = {:.4}  tatd = {:.4}",
                    r.case, r.label, r.aggregate_cost, r.discomfort_cost, r.tatd
                );
            }
        }
        Command::Sweep { common, param, values } => {
            let cfg = common.load()?;
            let art = commands::cmd_sweep(&cfg, param, &values)?;
            for p in &art.points {
                match &p.summary {
                    Some(s) => println!(
                        "{} = {}  aggregate = {:.4}  tatd = {:.4}  hvac = {:.4}",
                        param.name(),
                        p.value,
                        s.totals.aggregate_cost,
                        s.totals.tatd,
                        s.totals.hvac_energy
                    ),
                    None => println!("{} = {}  {}", param.name(), p.value, p.status),
                }
            }
        }
        Command::CheckBounds { common } => print!("{}", commands::cmd_check_bounds(&common.load()?)?),
        Command::GenScenario { seed, n, slots, output } => {
            let spec = SyntheticSpec { seed, n, slots, ..SyntheticSpec::default() };
            commands::cmd_gen_scenario(&spec, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
