//! Time loop: solve each slot, advance physical and virtual state, account costs.

use serde::{Deserialize, Serialize};

use crate::domain::{
    battery_cost, bilinear_trade_cost, discomfort_cost, grid_residual, grid_settlement, pme_profit, thermal_step,
    FollowerAction, HvacMode, LeaderAction, NanogridControl, NanogridParams, PmeControl, PmeParams, Scenario,
    SlotState,
};
use crate::error::{Error, Result};
use crate::nanogrid::{self, FollowerBounds};
use crate::num::Scalar;
use crate::pme::{self, LeaderBounds};
use crate::stackelberg::{solve_slot, GameConfig, IterationRecord};

/// Scenario bound to the physical parameters it is simulated with.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup<S> {
    scenario: Scenario<S>,
    nanogrids: Vec<NanogridParams<S>>,
    pme: PmeParams<S>,
    mode: HvacMode,
}

impl<S: Scalar> Setup<S> {
    /// Validates parameters and the comfort assumptions against the scenario.
    pub fn new(
        scenario: Scenario<S>,
        nanogrids: Vec<NanogridParams<S>>,
        pme: PmeParams<S>,
        mode: HvacMode,
    ) -> Result<Self> {
        scenario.bind(&nanogrids, &pme)?;
        Ok(Setup { scenario, nanogrids, pme, mode })
    }

    pub fn scenario(&self) -> &Scenario<S> {
        &self.scenario
    }

    pub fn nanogrids(&self) -> &[NanogridParams<S>] {
        &self.nanogrids
    }

    pub fn pme(&self) -> &PmeParams<S> {
        &self.pme
    }

    pub fn mode(&self) -> HvacMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.scenario.n()
    }

    /// Initial state at the middle of the comfort and battery bands.
    pub fn midpoint_start(&self) -> InitialState<S> {
        InitialState {
            t0: self.nanogrids.iter().map(|p| S::half() * (p.t_min + p.t_max)).collect(),
            e0: S::half() * (self.pme.e_min + self.pme.e_max_cap),
        }
    }
}

/// Lyapunov tuning of every participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controls<S> {
    pub nanogrids: Vec<NanogridControl<S>>,
    pub pme: PmeControl<S>,
}

/// Bounds the controls were validated against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds<S> {
    pub nanogrids: Vec<FollowerBounds<S>>,
    pub pme: LeaderBounds<S>,
}

impl<S: Scalar> Controls<S> {
    /// V_i = V_i^max, Γ_i = Γ_i^min, V_P = V_P^max, θ = θ^min.
    pub fn defaults(setup: &Setup<S>) -> Result<Self> {
        let prices = setup.scenario.price_envelope();
        let nanogrids = setup
            .nanogrids
            .iter()
            .enumerate()
            .map(|(i, p)| nanogrid::default_control(p, &setup.scenario.nanogrid_envelope(i), &prices))
            .collect::<Result<Vec<_>>>()?;
        Ok(Controls { nanogrids, pme: pme::default_control(&setup.pme, &prices)? })
    }

    pub fn validate(&self, setup: &Setup<S>) -> Result<ControlBounds<S>> {
        if self.nanogrids.len() != setup.n() {
            return Err(Error::Config(format!(
                "{} nanogrid controls for {} nanogrids",
                self.nanogrids.len(),
                setup.n()
            )));
        }
        let prices = setup.scenario.price_envelope();
        let nanogrids = self
            .nanogrids
            .iter()
            .enumerate()
            .map(|(i, c)| {
                nanogrid::validate_control(c, &setup.nanogrids[i], &setup.scenario.nanogrid_envelope(i), &prices, i)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlBounds { nanogrids, pme: pme::validate_control(&self.pme, &setup.pme, &prices)? })
    }

    pub fn shifts(&self) -> Vec<S> {
        self.nanogrids.iter().map(|c| c.gamma_shift).collect()
    }
}

/// Starting temperatures and battery level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState<S> {
    pub t0: Vec<S>,
    pub e0: S,
}

/// Simulation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Abort with an invariant failure on the first bound violation instead of counting it.
    pub strict: bool,
    /// Keep the solver trace of every slot.
    pub keep_traces: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { strict: true, keep_traces: false }
    }
}

/// Decisions taken in one slot by whichever strategy drives the simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision<S> {
    pub leader: LeaderAction<S>,
    pub followers: Vec<FollowerAction<S>>,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<IterationRecord<S>>,
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome<S> {
    pub slot: usize,
    pub leader: LeaderAction<S>,
    pub followers: Vec<FollowerAction<S>>,
    /// State at the start of the following slot.
    pub next: SlotState<S>,
    pub trade_cost: Vec<S>,
    pub discomfort: Vec<S>,
    pub pme_profit: S,
    pub grid_residual: S,
    pub grid_cost: S,
    pub battery_cost: S,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default = "Vec::new")]
    pub trace: Vec<IterationRecord<S>>,
}

/// Horizon totals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals<S> {
    pub pme_profit: S,
    pub energy_cost: S,
    pub discomfort_cost: S,
    /// Discomfort plus energy cost minus PME profit.
    pub aggregate_cost: S,
    /// Mean absolute deviation from the comfort target over nanogrids and slots.
    pub tatd: S,
    pub hvac_energy: S,
    pub grid_cost: S,
    pub battery_cost: S,
}

/// Bound violations observed in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub comfort: usize,
    pub battery: usize,
    pub queue_identity: usize,
}

/// Result of simulating a whole horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport<S> {
    pub totals: Totals<S>,
    pub violations: Violations,
    pub non_converged_slots: usize,
    pub outcomes: Vec<SlotOutcome<S>>,
}

impl<S: Scalar> RunReport<S> {
    /// Indoor temperature at the end of each slot, `[slot][nanogrid]`.
    pub fn temperatures(&self) -> Vec<Vec<S>> {
        self.outcomes.iter().map(|o| o.next.t.clone()).collect()
    }

    pub fn battery_levels(&self) -> Vec<S> {
        self.outcomes.iter().map(|o| o.next.e_batt).collect()
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.outcomes.iter().map(|o| o.iterations).collect()
    }

    /// Recomputes the totals from the slot outcomes and the scenario.
    pub fn reaccumulate(&self, scenario: &Scenario<S>) -> Totals<S> {
        accumulate(&self.outcomes, scenario)
    }
}

fn accumulate<S: Scalar>(outcomes: &[SlotOutcome<S>], scenario: &Scenario<S>) -> Totals<S> {
    let mut t = Totals::default();
    let mut dev = S::zero();
    let mut count = 0usize;
    for o in outcomes {
        t.pme_profit += o.pme_profit;
        t.energy_cost += o.trade_cost.iter().copied().sum::<S>();
        t.discomfort_cost += o.discomfort.iter().copied().sum::<S>();
        t.hvac_energy += o.followers.iter().map(|f| f.e).sum::<S>();
        t.grid_cost += o.grid_cost;
        t.battery_cost += o.battery_cost;
        for (i, &temp) in o.next.t.iter().enumerate() {
            dev += (temp - scenario.t_opt()[o.slot][i]).abs();
            count += 1;
        }
    }
    t.aggregate_cost = t.discomfort_cost + t.energy_cost - t.pme_profit;
    t.tatd = if count > 0 { dev / S::lit(count as f64) } else { S::zero() };
    t
}

/// Advances temperatures, virtual temperature queues, battery level and battery queue.
#[allow(clippy::too_many_arguments)]
pub fn update_queues<S: Scalar>(
    state: &SlotState<S>,
    followers: &[FollowerAction<S>],
    leader: &LeaderAction<S>,
    scenario: &Scenario<S>,
    k: usize,
    params: &[NanogridParams<S>],
    controls: &Controls<S>,
    mode: HvacMode,
) -> SlotState<S> {
    let sign = match mode {
        HvacMode::Heating => S::one(),
        HvacMode::Cooling => -S::one(),
    };
    let mut t = Vec::with_capacity(followers.len());
    let mut h = Vec::with_capacity(followers.len());
    for (i, f) in followers.iter().enumerate() {
        let p = &params[i];
        let slot = scenario.nanogrid_slot(k, i);
        t.push(thermal_step(state.t[i], slot.t_out, f.e, p, mode));
        let leak = S::one() - p.epsilon;
        h.push(p.epsilon * state.h[i] + leak * (controls.nanogrids[i].gamma_shift + slot.t_out + sign * p.eta * f.e));
    }
    SlotState { t, h, e_batt: state.e_batt + leader.y, b: state.b + leader.y }
}

/// Runs a whole horizon, with each slot's decisions produced by `decide`.
pub fn simulate<S, F>(
    setup: &Setup<S>,
    controls: &Controls<S>,
    init: &InitialState<S>,
    options: RunOptions,
    mut decide: F,
) -> Result<RunReport<S>>
where
    S: Scalar,
    F: FnMut(usize, &SlotState<S>) -> Result<SlotDecision<S>>,
{
    let n = setup.n();
    if init.t0.len() != n {
        return Err(Error::Config(format!("{} initial temperatures for {n} nanogrids", init.t0.len())));
    }
    for (i, (&t0, p)) in init.t0.iter().zip(&setup.nanogrids).enumerate() {
        if t0 < p.t_min || t0 > p.t_max {
            return Err(Error::Config(format!("initial temperature {t0} of nanogrid {i} outside the comfort band")));
        }
    }
    let bat = &setup.pme;
    if init.e0 < bat.e_min || init.e0 > bat.e_max_cap {
        return Err(Error::Config(format!(
            "initial battery level {} outside [{}, {}]",
            init.e0, bat.e_min, bat.e_max_cap
        )));
    }

    let scenario = &setup.scenario;
    let mut state = SlotState::new(init.t0.clone(), init.e0, &controls.shifts(), controls.pme.theta)?;
    let mut outcomes = Vec::with_capacity(scenario.slots());
    let mut violations = Violations::default();
    let bound_tol = S::tol(1e-9);

    for k in 0..scenario.slots() {
        let decision = decide(k, &state)?;
        if decision.followers.len() != n {
            return Err(Error::Config(format!(
                "strategy returned {} follower actions for {n} nanogrids",
                decision.followers.len()
            )));
        }
        let next = update_queues(
            &state,
            &decision.followers,
            &decision.leader,
            scenario,
            k,
            &setup.nanogrids,
            controls,
            setup.mode,
        );

        let mut problems = Vec::new();
        for (i, p) in setup.nanogrids.iter().enumerate() {
            let t = next.t[i];
            if t < p.t_min - bound_tol || t > p.t_max + bound_tol {
                violations.comfort += 1;
                problems.push(format!("nanogrid {i} temperature {t} outside [{}, {}]", p.t_min, p.t_max));
            }
            let shift = controls.nanogrids[i].gamma_shift;
            let tol = S::tol(1e-12) * (S::one() + t.abs() + shift.abs());
            if (next.h[i] - (t + shift)).abs() > tol {
                violations.queue_identity += 1;
                problems.push(format!("nanogrid {i} queue drifted from temperature by {}", next.h[i] - (t + shift)));
            }
        }
        if next.e_batt < bat.e_min - bound_tol || next.e_batt > bat.e_max_cap + bound_tol {
            violations.battery += 1;
            problems.push(format!("battery level {} outside [{}, {}]", next.e_batt, bat.e_min, bat.e_max_cap));
        }
        let theta = controls.pme.theta;
        if (next.b - (next.e_batt + theta)).abs() > S::tol(1e-12) * (S::one() + next.e_batt.abs() + theta.abs()) {
            violations.queue_identity += 1;
            problems.push("battery queue drifted from battery level".to_string());
        }
        if options.strict && !problems.is_empty() {
            return Err(Error::Invariant { slot: k, detail: problems.join("; ") });
        }

        let market = scenario.market(k);
        let leader = decision.leader;
        let tps: Vec<S> = decision.followers.iter().map(|f| f.tp).collect();
        let residual = grid_residual(&tps, market.g_t, leader.y);
        outcomes.push(SlotOutcome {
            slot: k,
            leader,
            trade_cost: tps.iter().map(|&tp| bilinear_trade_cost(tp, leader.p_s, leader.p_b)).collect(),
            discomfort: (0..n)
                .map(|i| discomfort_cost(next.t[i], scenario.t_opt()[k][i], setup.nanogrids[i].gamma))
                .collect(),
            pme_profit: pme_profit(&leader, &tps, &market, bat.c_b),
            grid_residual: residual,
            grid_cost: grid_settlement(residual, market.m_s, market.m_b),
            battery_cost: battery_cost(leader.y, bat.c_b),
            followers: decision.followers,
            next: next.clone(),
            converged: decision.converged,
            iterations: decision.iterations,
            trace: if options.keep_traces { decision.trace } else { Vec::new() },
        });
        state = next;
    }

    Ok(RunReport {
        totals: accumulate(&outcomes, scenario),
        violations,
        non_converged_slots: outcomes.iter().filter(|o| !o.converged).count(),
        outcomes,
    })
}

/// Runs the drift-plus-penalty Stackelberg game in every slot.
pub fn run<S: Scalar>(
    setup: &Setup<S>,
    controls: &Controls<S>,
    config: &GameConfig<S>,
    init: &InitialState<S>,
    options: RunOptions,
) -> Result<RunReport<S>> {
    controls.validate(setup)?;
    config.validate()?;
    let scenario = &setup.scenario;
    let mut cfg = *config;
    cfg.record_trace = options.keep_traces;
    simulate(setup, controls, init, options, |k, state| {
        let sol = solve_slot(
            state,
            &scenario.nanogrid_slots(k),
            &scenario.market(k),
            &setup.nanogrids,
            &controls.nanogrids,
            &setup.pme,
            &controls.pme,
            setup.mode,
            &cfg,
        )?;
        Ok(SlotDecision {
            leader: sol.leader,
            followers: sol.actions(),
            converged: sol.converged,
            iterations: sol.iterations,
            trace: sol.trace,
        })
    })
}
