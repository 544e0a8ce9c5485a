//! TOML run configuration and its resolution into a bound [`Setup`] and [`Controls`].

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use nanogrid_core::domain::{HvacMode, NanogridParams, PmeParams};
use nanogrid_core::scenario_io::{generate_synthetic, load_scenario_file, SyntheticSpec};
use nanogrid_core::simulator::{ControlBounds, Controls, Setup};
use nanogrid_core::stackelberg::GameConfig;
use nanogrid_core::{nanogrid, pme};

/// Inertia used for every nanogrid of a scenario file when none is configured.
pub const DEFAULT_EPSILON: f64 = 0.955;

/// Where the scenario comes from. Leaving both fields out selects the default
/// synthetic scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSource {
    pub file: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    /// Keep only the first nanogrids of the scenario.
    pub nanogrids: Option<usize>,
}

/// Physical parameters applied to every nanogrid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamOverrides {
    /// One value for all nanogrids or one per nanogrid.
    pub epsilon: Option<Vec<f64>>,
    pub eta: Option<f64>,
    pub e_max: Option<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub l_max: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmeOverrides {
    pub e_min: Option<f64>,
    pub e_max: Option<f64>,
    pub u_cmax: Option<f64>,
    pub u_dmax: Option<f64>,
    pub c_b: Option<f64>,
}

/// Explicit Lyapunov tuning. Anything left out takes the default
/// `V = V_max, Γ = Γ_min, V_P = V_P_max, θ = θ_min`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlOverrides {
    pub v: Option<Vec<f64>>,
    pub gamma_shift: Option<Vec<f64>>,
    pub v_p: Option<f64>,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write every solver iterate.
    pub traces: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), traces: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    pub params: ParamOverrides,
    pub pme: PmeOverrides,
    pub controls: ControlOverrides,
    pub game: GameConfig<f64>,
    pub mode: HvacMode,
    pub output: OutputConfig,
}

/// Everything a command needs to simulate.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub setup: Setup<f64>,
    pub controls: Controls<f64>,
    pub bounds: ControlBounds<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        // Relative scenario paths are taken from the configuration's directory.
        if let (Some(file), Some(base)) = (&mut cfg.scenario.file, path.parent()) {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        Ok(cfg)
    }

    /// The synthetic spec in effect, or `None` for a scenario file.
    pub fn synthetic_spec(&self) -> Result<Option<SyntheticSpec>> {
        match (&self.scenario.file, &self.scenario.synthetic) {
            (Some(_), Some(_)) => bail!("give either scenario.file or scenario.synthetic, not both"),
            (Some(_), None) => Ok(None),
            (None, spec) => Ok(Some(spec.clone().unwrap_or_default())),
        }
    }

    pub fn synthetic_mut(&mut self) -> Result<&mut SyntheticSpec> {
        if self.scenario.file.is_some() {
            bail!("the scenario comes from a file; synthetic settings do not apply");
        }
        Ok(self.scenario.synthetic.get_or_insert_with(SyntheticSpec::default))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        self.game.validate()?;
        let (mut scenario, mut nanogrids, mut battery) = match self.synthetic_spec()? {
            Some(spec) => {
                let syn = generate_synthetic::<f64>(&spec)?;
                (syn.scenario, syn.nanogrids, syn.pme)
            }
            None => {
                let path = self.scenario.file.as_ref().expect("checked above");
                let scenario =
                    load_scenario_file::<f64>(path).with_context(|| format!("loading scenario {}", path.display()))?;
                let nanogrids = vec![NanogridParams::reference(DEFAULT_EPSILON); scenario.n()];
                (scenario, nanogrids, PmeParams::reference())
            }
        };
        if let Some(n) = self.scenario.nanogrids {
            scenario = scenario.truncate_nanogrids(n)?;
            nanogrids.truncate(n);
        }
        let n = scenario.n();
        let p = &self.params;
        if let Some(eps) = &p.epsilon {
            let eps = broadcast(eps, n, "params.epsilon")?;
            for (ng, e) in nanogrids.iter_mut().zip(eps) {
                ng.epsilon = e;
            }
        }
        for ng in &mut nanogrids {
            set(&mut ng.eta, p.eta);
            set(&mut ng.e_max, p.e_max);
            set(&mut ng.t_min, p.t_min);
            set(&mut ng.t_max, p.t_max);
            set(&mut ng.l_max, p.l_max);
            set(&mut ng.gamma, p.gamma);
        }
        let b = &self.pme;
        set(&mut battery.e_min, b.e_min);
        set(&mut battery.e_max_cap, b.e_max);
        set(&mut battery.u_cmax, b.u_cmax);
        set(&mut battery.u_dmax, b.u_dmax);
        set(&mut battery.c_b, b.c_b);

        let setup = Setup::new(scenario, nanogrids, battery, self.mode)?;
        let mut controls = Controls::defaults(&setup)?;
        let c = &self.controls;
        let prices = setup.scenario().price_envelope();
        if let Some(v) = &c.v {
            for (i, (ctl, v)) in controls.nanogrids.iter_mut().zip(broadcast(v, n, "controls.v")?).enumerate() {
                ctl.v = v;
                // The admissible shift moves with V; keep the default at its lower end.
                let env = setup.scenario().nanogrid_envelope(i);
                ctl.gamma_shift = nanogrid::compute_bounds(&setup.nanogrids()[i], v, &env, &prices)?.gamma_min;
            }
        }
        if let Some(g) = &c.gamma_shift {
            for (ctl, g) in controls.nanogrids.iter_mut().zip(broadcast(g, n, "controls.gamma_shift")?) {
                ctl.gamma_shift = g;
            }
        }
        if let Some(v_p) = c.v_p {
            controls.pme.v_p = v_p;
            controls.pme.theta = pme::compute_bounds(setup.pme(), v_p, &prices)?.theta_min;
        }
        set(&mut controls.pme.theta, c.theta);
        let bounds = controls.validate(&setup)?;
        Ok(Resolved { setup, controls, bounds })
    }
}

fn set(slot: &mut f64, value: Option<f64>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn broadcast(values: &[f64], n: usize, name: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values.to_vec()),
        len => bail!("{name} has {len} entries; expected 1 or {n}"),
    }
}
