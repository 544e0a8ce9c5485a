//! Comparison strategies: fixed-point temperature control with and without PME
//! pricing, a myopic per-slot game, the proposed game and a cooperative
//! social-welfare optimum.

use serde::{Deserialize, Serialize};

use crate::domain::{
    battery_cost, discomfort_cost, grid_residual, grid_settlement, thermal_step, FollowerAction, HvacMode,
    LeaderAction, MarketSlot, NanogridParams, NanogridSlot, PmeParams, SlotState,
};
use crate::error::{Error, Result};
use crate::nanogrid::{feasible_box, FollowerProblem, ThresholdCase};
use crate::num::Scalar;
use crate::pme::ChargeProblem;
use crate::simulator::{self, simulate, Controls, InitialState, RunOptions, RunReport, Setup, SlotDecision};
use crate::stackelberg::{GameConfig, SlotGame};

/// The five evaluated strategies, numbered 1 to 5 in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseId {
    FixedPointForecastPrice,
    FixedPointRealTimePrice,
    MyopicGame,
    Proposed,
    SocialWelfare,
}

impl CaseId {
    pub const ALL: [CaseId; 5] = [
        CaseId::FixedPointForecastPrice,
        CaseId::FixedPointRealTimePrice,
        CaseId::MyopicGame,
        CaseId::Proposed,
        CaseId::SocialWelfare,
    ];

    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn from_number(n: usize) -> Option<Self> {
        n.checked_sub(1).and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseId::FixedPointForecastPrice => "fixed-point-forecast-price",
            CaseId::FixedPointRealTimePrice => "fixed-point-real-time-price",
            CaseId::MyopicGame => "myopic-game",
            CaseId::Proposed => "proposed",
            CaseId::SocialWelfare => "social-welfare",
        }
    }

    /// Whether the case sets internal prices, so that PME profit and nanogrid
    /// energy cost are meaningful.
    pub fn has_prices(self) -> bool {
        self != CaseId::SocialWelfare
    }
}

impl std::str::FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(n) = s.parse::<usize>() {
            return CaseId::from_number(n).ok_or_else(|| Error::Config(format!("no case numbered {n}")));
        }
        CaseId::ALL.into_iter().find(|c| c.label() == s).ok_or_else(|| Error::Config(format!("unknown case '{s}'")))
    }
}

/// Consumption that brings the next indoor temperature to `slot.t_opt`, clamped to
/// the consumption box.
pub fn fixed_point_consumption<S: Scalar>(
    t: S,
    slot: &NanogridSlot<S>,
    params: &NanogridParams<S>,
    mode: HvacMode,
) -> Result<S> {
    let (lo, hi) = feasible_box(params, slot)?;
    let eps = params.epsilon;
    let gain = (S::one() - eps) * params.eta * mode.sign::<S>();
    let e = (slot.t_opt - eps * t - (S::one() - eps) * slot.t_out) / gain;
    Ok(e.clamp_to(lo, hi))
}

/// Cooperative cost of one slot: battery wear, main-grid settlement and discomfort.
/// Payments between the PME and the nanogrids cancel and do not appear.
#[allow(clippy::too_many_arguments)]
pub fn social_welfare_cost<S: Scalar>(
    e: &[S],
    y: S,
    state: &SlotState<S>,
    slots: &[NanogridSlot<S>],
    market: &MarketSlot<S>,
    params: &[NanogridParams<S>],
    pme: &PmeParams<S>,
    mode: HvacMode,
) -> S {
    let mut tps = Vec::with_capacity(e.len());
    let mut discomfort = S::zero();
    for (i, &ei) in e.iter().enumerate() {
        tps.push(ei - (slots[i].rp - slots[i].d));
        let next = thermal_step(state.t[i], slots[i].t_out, ei, &params[i], mode);
        discomfort += discomfort_cost(next, slots[i].t_opt, params[i].gamma);
    }
    let residual = grid_residual(&tps, market.g_t, y);
    battery_cost(y, pme.c_b) + grid_settlement(residual, market.m_s, market.m_b) + discomfort
}

/// Joint per-slot problem of the cooperative case. Each participant's drift term
/// is scaled by the inverse of its penalty weight, so the penalty part is exactly
/// the social-welfare cost up to constants.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfareProblem<S> {
    pub followers: Vec<FollowerProblem<S>>,
    pub charge: ChargeProblem<S>,
    pub market: MarketSlot<S>,
}

/// Minimizer of a [`WelfareProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct WelfareSolution<S> {
    pub e: Vec<S>,
    pub y: S,
    /// Marginal value of energy inside the community, within `[m_b, m_s]`.
    pub price: S,
    pub objective: S,
}

impl<S: Scalar> WelfareProblem<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state: &SlotState<S>,
        slots: &[NanogridSlot<S>],
        market: &MarketSlot<S>,
        params: &[NanogridParams<S>],
        controls: &Controls<S>,
        pme: &PmeParams<S>,
        mode: HvacMode,
    ) -> Result<Self> {
        let followers = (0..slots.len())
            .map(|i| {
                FollowerProblem::drift_plus_penalty(
                    state.t[i],
                    state.h[i],
                    &slots[i],
                    &params[i],
                    &controls.nanogrids[i],
                    mode,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        if followers.iter().any(|f| f.weight <= S::zero()) || controls.pme.v_p <= S::zero() {
            return Err(Error::Config("social welfare needs positive penalty weights".into()));
        }
        Ok(WelfareProblem { followers, charge: ChargeProblem::new(state.b, &controls.pme, pme), market: *market })
    }

    pub fn objective(&self, e: &[S], y: S) -> S {
        let mut total = S::zero();
        let mut net = -self.market.g_t;
        for (f, &ei) in self.followers.iter().zip(e) {
            total += (f.quad * ei * ei + f.lin * ei) / f.weight;
            net += f.tp(ei);
        }
        let c = &self.charge;
        total
            + c.backlog * y / c.v_p
            + battery_cost(y, c.c_b)
            + grid_settlement(net + y, self.market.m_s, self.market.m_b)
    }

    /// Every participant's choice when energy is valued at `price`, and the
    /// resulting main-grid residual.
    fn respond(&self, price: S) -> (Vec<S>, S, S) {
        let e: Vec<S> = self.followers.iter().map(|f| f.solve(price, price).0).collect();
        let c = &self.charge;
        let curv = c.v_p * c.c_b;
        let slope = c.backlog + c.v_p * price;
        let y = if curv > S::zero() {
            (-slope / curv).clamp_to(c.y_lo, c.y_hi)
        } else if slope > S::zero() {
            c.y_lo
        } else {
            c.y_hi
        };
        let net: S = self.followers.iter().zip(&e).map(|(f, &ei)| f.tp(ei)).sum::<S>() - self.market.g_t;
        (e, y, net + y)
    }

    /// Minimizes by bisection on the internal energy price: the residual is
    /// nonincreasing in the price, and the optimum values energy at `m_s` when the
    /// community must buy, at `m_b` when it must sell, and in between when it
    /// balances exactly.
    pub fn solve(&self) -> WelfareSolution<S> {
        let (m_s, m_b) = (self.market.m_s, self.market.m_b);
        let finish = |price: S, (e, y, _): (Vec<S>, S, S)| {
            let objective = self.objective(&e, y);
            WelfareSolution { e, y, price, objective }
        };
        let at_top = self.respond(m_s);
        if at_top.2 >= S::zero() {
            return finish(m_s, at_top);
        }
        let at_bottom = self.respond(m_b);
        if at_bottom.2 <= S::zero() {
            return finish(m_b, at_bottom);
        }
        let (mut lo, mut hi) = (m_b, m_s);
        for _ in 0..200 {
            let mid = S::half() * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.respond(mid).2 > S::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = finish(lo, self.respond(lo));
        let b = finish(hi, self.respond(hi));
        if b.objective < a.objective {
            b
        } else {
            a
        }
    }
}

fn single_shot<S: Scalar>(leader: LeaderAction<S>, followers: Vec<FollowerAction<S>>) -> SlotDecision<S> {
    SlotDecision { leader, followers, converged: true, iterations: 0, trace: Vec::new() }
}

fn fixed_point_actions<S: Scalar>(setup: &Setup<S>, k: usize, state: &SlotState<S>) -> Result<Vec<FollowerAction<S>>> {
    let scenario = setup.scenario();
    (0..setup.n())
        .map(|i| {
            let slot = scenario.nanogrid_slot(k, i);
            let e = fixed_point_consumption(state.t[i], &slot, &setup.nanogrids()[i], setup.mode())?;
            Ok(FollowerAction { e, tp: e - (slot.rp - slot.d) })
        })
        .collect()
}

/// Runs one strategy over the whole horizon.
pub fn run_case<S: Scalar>(
    case: CaseId,
    setup: &Setup<S>,
    controls: &Controls<S>,
    config: &GameConfig<S>,
    init: &InitialState<S>,
    options: RunOptions,
) -> Result<RunReport<S>> {
    if case == CaseId::Proposed {
        return simulator::run(setup, controls, config, init, options);
    }
    controls.validate(setup)?;
    config.validate()?;
    let mut cfg = *config;
    cfg.record_trace = options.keep_traces;
    let scenario = setup.scenario();
    let pme = *setup.pme();
    let mode = setup.mode();

    simulate(setup, controls, init, options, |k, state| {
        let market = scenario.market(k);
        let slots = scenario.nanogrid_slots(k);
        match case {
            CaseId::FixedPointForecastPrice => {
                let followers = fixed_point_actions(setup, k, state)?;
                let net = followers.iter().map(|f| f.tp).sum::<S>() - market.g_t;
                let y = ChargeProblem::new(state.b, &controls.pme, &pme).solve(net, market.m_s, market.m_b);
                Ok(single_shot(LeaderAction { p_s: market.m_s, p_b: market.m_b, y }, followers))
            }
            CaseId::FixedPointRealTimePrice => {
                let inelastic = fixed_point_actions(setup, k, state)?
                    .into_iter()
                    .zip(&slots)
                    .map(|(f, s)| FollowerProblem {
                        quad: S::zero(),
                        lin: S::zero(),
                        weight: S::zero(),
                        kink: s.rp - s.d,
                        lo: f.e,
                        hi: f.e,
                    })
                    .collect::<Vec<_>>();
                let game = SlotGame {
                    cases: vec![ThresholdCase::General; inelastic.len()],
                    followers: inelastic,
                    charge: ChargeProblem::new(state.b, &controls.pme, &pme),
                    market,
                    pme,
                };
                let sol = game.solve(&cfg)?;
                Ok(SlotDecision {
                    leader: sol.leader,
                    followers: sol.actions(),
                    converged: sol.converged,
                    iterations: sol.iterations,
                    trace: sol.trace,
                })
            }
            CaseId::MyopicGame => {
                let followers = (0..setup.n())
                    .map(|i| FollowerProblem::myopic(state.t[i], &slots[i], &setup.nanogrids()[i], mode))
                    .collect::<Result<Vec<_>>>()?;
                let (y_lo, y_hi) = pme.charge_box();
                let charge = ChargeProblem {
                    backlog: S::zero(),
                    v_p: S::one(),
                    c_b: pme.c_b,
                    y_lo: y_lo.max(pme.e_min - state.e_batt),
                    y_hi: y_hi.min(pme.e_max_cap - state.e_batt),
                };
                let game = SlotGame {
                    cases: vec![ThresholdCase::General; followers.len()],
                    followers,
                    charge,
                    market,
                    pme: PmeParams { u_dmax: -charge.y_lo, u_cmax: charge.y_hi, ..pme },
                };
                let sol = game.solve(&cfg)?;
                Ok(SlotDecision {
                    leader: sol.leader,
                    followers: sol.actions(),
                    converged: sol.converged,
                    iterations: sol.iterations,
                    trace: sol.trace,
                })
            }
            CaseId::SocialWelfare => {
                let problem = WelfareProblem::new(state, &slots, &market, setup.nanogrids(), controls, &pme, mode)?;
                let sol = problem.solve();
                let followers =
                    sol.e.iter().zip(&problem.followers).map(|(&e, f)| FollowerAction { e, tp: f.tp(e) }).collect();
                Ok(single_shot(LeaderAction { p_s: sol.price, p_b: sol.price, y: sol.y }, followers))
            }
            CaseId::Proposed => unreachable!("handled above"),
        }
    })
}
