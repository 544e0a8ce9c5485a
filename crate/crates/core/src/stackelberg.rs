//! Per-slot leader/follower iteration: the PME posts an action, every nanogrid best
//! responds, and the PME takes a projected subgradient step until consecutive
//! actions stop moving.

use serde::{Deserialize, Serialize};

use crate::domain::{
    FollowerAction, HvacMode, LeaderAction, MarketSlot, NanogridControl, NanogridParams, NanogridSlot, PmeControl,
    PmeParams, SlotState,
};
use crate::error::{Error, Result};
use crate::nanogrid::{compute_thresholds, threshold_case, BestResponse, FollowerProblem};
use crate::num::Scalar;
use crate::pme::{p4_value, subgradients_at, ChargeProblem, Injection, SubgradientSet};

/// Constants of the harmonic step schedule `1 / (c0 + c1 m)` for each coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConstants<S> {
    pub s0: S,
    pub s1: S,
    pub b0: S,
    pub b1: S,
    pub y0: S,
    pub y1: S,
}

impl<S: Scalar> Default for StepConstants<S> {
    fn default() -> Self {
        let (one, half) = (S::one(), S::half());
        StepConstants { s0: one, s1: half, b0: one, b1: half, y0: one, y1: half }
    }
}

/// Harmonic step size `1 / (c0 + c1 m)`.
pub fn step_size<S: Scalar>(c0: S, c1: S, m: usize) -> S {
    S::one() / (c0 + c1 * S::lit(m as f64))
}

/// How the prices move along their subgradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `x - δ^m · width · g`: the raw subgradient scaled by the coordinate's range.
    Harmonic,
    /// Safeguarded sign steps `x - r · sign(g)` with one radius `r` per coordinate,
    /// starting at `δ^1 · width`. An accepted trial halves the radius of every
    /// coordinate whose subgradient changed sign and grows the others by 20 %
    /// (capped at the width). When a trial that moves several coordinates does not
    /// lower the leader objective, each of those moves is tried alone and the best
    /// improving one is taken; the radii of the failed moves are halved. Once every
    /// move is shorter than `rho`, the `±rho` neighbours are polled before stopping.
    #[default]
    Adaptive,
}

/// How the battery charge is updated between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeUpdate {
    /// Projected subgradient step, like the prices.
    Subgradient,
    /// Exact minimizer of the leader objective in `y` given the current injections.
    #[default]
    Exact,
}

/// Starting leader action.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy<S> {
    /// Middle of the price band, no charge.
    #[default]
    Midpoint,
    Fixed(LeaderAction<S>),
    /// Runs from every point of a `k × k` grid over the feasible prices (no charge)
    /// and keeps the lowest objective. Useful because the leader objective is not
    /// convex in the prices.
    Grid(usize),
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig<S> {
    /// Convergence tolerance on each coordinate of consecutive leader actions.
    pub rho: S,
    pub max_iters: usize,
    pub steps: StepConstants<S>,
    pub rule: StepRule,
    pub charge: ChargeUpdate,
    pub init: InitPolicy<S>,
    /// Enforced separation `p_s - p_b`.
    pub min_gap: S,
    /// Keep every iterate in the returned trace.
    pub record_trace: bool,
}

impl<S: Scalar> Default for GameConfig<S> {
    fn default() -> Self {
        GameConfig {
            rho: S::lit(1e-3),
            max_iters: 500,
            steps: StepConstants::default(),
            rule: StepRule::default(),
            charge: ChargeUpdate::default(),
            init: InitPolicy::default(),
            min_gap: S::lit(0.01),
            record_trace: true,
        }
    }
}

impl<S: Scalar> GameConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let z = S::zero();
        let st = &self.steps;
        if !(self.rho > z) {
            return Err(Error::Config("rho must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if [st.s0, st.s1, st.b0, st.b1, st.y0, st.y1].iter().any(|&c| !(c > z)) {
            return Err(Error::Config("step constants must be positive".into()));
        }
        if !(self.min_gap > z) {
            return Err(Error::Config("min_gap must be positive".into()));
        }
        if matches!(self.init, InitPolicy::Grid(k) if k < 2) {
            return Err(Error::Config("a start grid needs at least 2 points per axis".into()));
        }
        Ok(())
    }
}

/// One iteration of the leader/follower exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<S> {
    pub m: usize,
    pub leader: LeaderAction<S>,
    pub followers: Vec<FollowerAction<S>>,
    pub subgradients: SubgradientSet<S>,
    /// Leader objective at this iterate.
    pub objective: S,
    /// Step lengths tried from this iterate for (p_s, p_b, y).
    pub steps: [S; 3],
    /// Distance from the previous iterate in each coordinate (absent for the first).
    pub distance: Option<[S; 3]>,
}

/// Outcome of one slot game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSolution<S> {
    pub leader: LeaderAction<S>,
    pub followers: Vec<BestResponse<S>>,
    pub objective: S,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<IterationRecord<S>>,
}

impl<S: Scalar> SlotSolution<S> {
    pub fn actions(&self) -> Vec<FollowerAction<S>> {
        self.followers.iter().map(|r| FollowerAction { e: r.e, tp: r.tp }).collect()
    }
}

/// Sequential clamp onto the price band (with separation `min_gap`) and the charge box.
pub fn project_leader<S: Scalar>(
    raw: LeaderAction<S>,
    m_s: S,
    m_b: S,
    params: &PmeParams<S>,
    min_gap: S,
) -> Result<LeaderAction<S>> {
    if m_s - m_b < min_gap {
        return Err(Error::Config(format!("price band [{m_b}, {m_s}] narrower than the minimum gap {min_gap}")));
    }
    let p_b = raw.p_b.clamp_to(m_b, m_s - min_gap);
    let p_s = raw.p_s.clamp_to(p_b + min_gap, m_s);
    let y = raw.y.clamp_to(-params.u_dmax, params.u_cmax);
    Ok(LeaderAction { p_s, p_b, y })
}

/// Everything the game needs for one slot, with the follower objectives already built.
#[derive(Debug, Clone)]
pub struct SlotGame<S> {
    pub followers: Vec<FollowerProblem<S>>,
    /// Threshold case of each follower, carried through to the responses.
    pub cases: Vec<crate::nanogrid::ThresholdCase>,
    pub charge: ChargeProblem<S>,
    pub market: MarketSlot<S>,
    pub pme: PmeParams<S>,
}

struct Evaluated<S> {
    leader: LeaderAction<S>,
    responses: Vec<BestResponse<S>>,
    grads: SubgradientSet<S>,
    objective: S,
}

impl<S: Scalar> SlotGame<S> {
    fn evaluate(&self, mut leader: LeaderAction<S>, exact_y: bool) -> Evaluated<S> {
        let responses: Vec<BestResponse<S>> =
            self.followers.iter().zip(&self.cases).map(|(f, &c)| f.respond(leader.p_s, leader.p_b, c)).collect();
        let tps: Vec<S> = responses.iter().map(|r| r.tp).collect();
        let net = tps.iter().copied().sum::<S>() - self.market.g_t;
        let (m_s, m_b) = (self.market.m_s, self.market.m_b);
        if exact_y {
            leader.y = self.charge.solve(net, m_s, m_b);
        }
        let mu = self.charge.marginal(leader.y, net, m_s, m_b);
        let inj: Vec<Injection<S>> = responses.iter().map(Injection::from).collect();
        let grads = subgradients_at(&leader, &inj, self.charge.backlog, mu, self.charge.v_p, self.charge.c_b);
        let objective = p4_value(&leader, &tps, self.charge.backlog, &self.market, self.charge.v_p, self.charge.c_b);
        Evaluated { leader, responses, grads, objective }
    }

    /// Runs the iteration until consecutive leader actions differ by less than
    /// `rho` in every coordinate, or `max_iters` is reached.
    ///
    /// With [`StepRule::Adaptive`] the distance is measured to the trial action and
    /// convergence additionally requires that trial to have been rejected, so the
    /// returned action is never worse than any iterate before it.
    pub fn solve(&self, config: &GameConfig<S>) -> Result<SlotSolution<S>> {
        config.validate()?;
        let (m_s, m_b) = (self.market.m_s, self.market.m_b);
        match config.init {
            InitPolicy::Midpoint => {
                let mid = S::half() * (m_s + m_b);
                let half_gap = S::half() * config.min_gap;
                self.solve_from(LeaderAction { p_s: mid + half_gap, p_b: mid - half_gap, y: S::zero() }, config)
            }
            InitPolicy::Fixed(a) => self.solve_from(a, config),
            InitPolicy::Grid(k) => {
                let top = m_s - config.min_gap;
                let mut best: Option<SlotSolution<S>> = None;
                for a in 0..k {
                    let p_b = m_b + (top - m_b) * S::lit(a as f64 / (k - 1) as f64);
                    for b in 0..k {
                        let p_s =
                            p_b + config.min_gap + (m_s - p_b - config.min_gap) * S::lit(b as f64 / (k - 1) as f64);
                        let sol = self.solve_from(LeaderAction { p_s, p_b, y: S::zero() }, config)?;
                        if best.as_ref().is_none_or(|bst| sol.objective < bst.objective) {
                            best = Some(sol);
                        }
                    }
                }
                Ok(best.expect("grid has at least four starts"))
            }
        }
    }

    fn solve_from(&self, start: LeaderAction<S>, config: &GameConfig<S>) -> Result<SlotSolution<S>> {
        let (m_s, m_b) = (self.market.m_s, self.market.m_b);
        let exact_y = config.charge == ChargeUpdate::Exact;
        let mut cur = self.evaluate(project_leader(start, m_s, m_b, &self.pme, config.min_gap)?, exact_y);

        let widths = [m_s - m_b, m_s - m_b, self.pme.u_cmax + self.pme.u_dmax];
        let st = &config.steps;
        let consts = [(st.s0, st.s1), (st.b0, st.b1), (st.y0, st.y1)];
        let mut radius = [0, 1, 2].map(|c| step_size(consts[c].0, consts[c].1, 1) * widths[c]);
        let active = [true, true, !exact_y];

        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let mut prev: Option<[S; 3]> = None;

        for m in 1..=config.max_iters {
            iterations = m;
            let x = coords(&cur.leader);
            let g = [cur.grads.g_ps, cur.grads.g_pb, cur.grads.g_y];
            let distance = prev.map(|p| [0, 1, 2].map(|c| (x[c] - p[c]).abs()));
            let mut steps = [S::zero(); 3];
            let mut raw = x;

            match config.rule {
                StepRule::Harmonic => {
                    converged = distance.is_some_and(|d| d.iter().all(|&d| d < config.rho));
                    let last = converged || m == config.max_iters;
                    if !last {
                        for c in 0..3 {
                            steps[c] = step_size(consts[c].0, consts[c].1, m) * widths[c];
                            raw[c] = x[c] - steps[c] * g[c];
                        }
                    }
                    self.push(&mut trace, config, m, &cur, steps, distance);
                    if last {
                        break;
                    }
                    let next = project_leader(from_coords(raw), m_s, m_b, &self.pme, config.min_gap)?;
                    cur = self.evaluate(next, exact_y);
                    prev = Some(x);
                }
                StepRule::Adaptive => {
                    for c in 0..3 {
                        if active[c] {
                            steps[c] = radius[c];
                            raw[c] = x[c] - radius[c] * sign(g[c]);
                        }
                    }
                    self.push(&mut trace, config, m, &cur, steps, distance);
                    let trial_action = project_leader(from_coords(raw), m_s, m_b, &self.pme, config.min_gap)?;
                    let t = coords(&trial_action);
                    let moved = [0, 1, 2].map(|c| (t[c] - x[c]).abs());
                    let small = moved.iter().all(|&d| d < config.rho);
                    if moved.iter().all(|&d| d == S::zero()) {
                        match self.poll(&cur, config, &active, exact_y)? {
                            Some(better) => {
                                widen(&mut radius, &x, &better.leader, config.rho);
                                prev = Some(x);
                                cur = better;
                                continue;
                            }
                            None => {
                                converged = true;
                                break;
                            }
                        }
                    }
                    let trial = self.evaluate(trial_action, exact_y);
                    if trial.objective < cur.objective {
                        let tg = [trial.grads.g_ps, trial.grads.g_pb, trial.grads.g_y];
                        for c in 0..3 {
                            if sign(tg[c]) * sign(g[c]) < S::zero() {
                                radius[c] *= S::half();
                            } else {
                                radius[c] = (radius[c] * S::lit(1.2)).min(widths[c]);
                            }
                        }
                        prev = Some(x);
                        cur = trial;
                    } else {
                        // A bad direction in one coordinate should not stall the others.
                        let mut single: Option<(usize, Evaluated<S>)> = None;
                        if moved.iter().filter(|&&d| d > S::zero()).count() > 1 {
                            for c in (0..3).filter(|&c| moved[c] > S::zero()) {
                                let mut one = x;
                                one[c] = raw[c];
                                let e = self.evaluate(
                                    project_leader(from_coords(one), m_s, m_b, &self.pme, config.min_gap)?,
                                    exact_y,
                                );
                                let target = single.as_ref().map_or(cur.objective, |s| s.1.objective);
                                if e.objective < target {
                                    single = Some((c, e));
                                }
                            }
                        }
                        for c in 0..3 {
                            if moved[c] > S::zero() && single.as_ref().is_none_or(|s| s.0 != c) {
                                radius[c] *= S::half();
                            }
                        }
                        if let Some((c, better)) = single {
                            let ng = [better.grads.g_ps, better.grads.g_pb, better.grads.g_y];
                            radius[c] = if sign(ng[c]) * sign(g[c]) < S::zero() {
                                radius[c] * S::half()
                            } else {
                                (radius[c] * S::lit(1.2)).min(widths[c])
                            };
                            prev = Some(x);
                            cur = better;
                            continue;
                        }
                        if small {
                            match self.poll(&cur, config, &active, exact_y)? {
                                Some(better) => {
                                    widen(&mut radius, &x, &better.leader, config.rho);
                                    prev = Some(x);
                                    cur = better;
                                }
                                None => {
                                    converged = true;
                                    break;
                                }
                            }
                        }
                    }
                }
            }
        }

        let objective = cur.objective;
        Ok(SlotSolution { leader: cur.leader, followers: cur.responses, objective, converged, iterations, trace })
    }

    /// Tries every projected move of `rho` along the active coordinates and their
    /// diagonals and returns the best one if it strictly lowers the objective.
    fn poll(
        &self,
        cur: &Evaluated<S>,
        config: &GameConfig<S>,
        active: &[bool; 3],
        exact_y: bool,
    ) -> Result<Option<Evaluated<S>>> {
        let (m_s, m_b) = (self.market.m_s, self.market.m_b);
        let x = coords(&cur.leader);
        let offsets = [-S::one(), S::zero(), S::one()];
        let mut best: Option<Evaluated<S>> = None;
        for &a in &offsets {
            for &b in &offsets {
                for &c in &offsets {
                    let d = [a, b, c];
                    if d.iter().all(|&v| v == S::zero()) || (0..3).any(|i| !active[i] && d[i] != S::zero()) {
                        continue;
                    }
                    let raw = [0, 1, 2].map(|i| x[i] + d[i] * config.rho);
                    let cand = project_leader(from_coords(raw), m_s, m_b, &self.pme, config.min_gap)?;
                    if coords(&cand) == x {
                        continue;
                    }
                    let e = self.evaluate(cand, exact_y);
                    let target = best.as_ref().map_or(cur.objective, |b| b.objective);
                    if e.objective < target {
                        best = Some(e);
                    }
                }
            }
        }
        Ok(best)
    }

    fn push(
        &self,
        trace: &mut Vec<IterationRecord<S>>,
        config: &GameConfig<S>,
        m: usize,
        cur: &Evaluated<S>,
        steps: [S; 3],
        distance: Option<[S; 3]>,
    ) {
        if config.record_trace {
            trace.push(IterationRecord {
                m,
                leader: cur.leader,
                followers: cur.responses.iter().map(|r| FollowerAction { e: r.e, tp: r.tp }).collect(),
                subgradients: cur.grads,
                objective: cur.objective,
                steps,
                distance,
            });
        }
    }
}

fn coords<S: Scalar>(a: &LeaderAction<S>) -> [S; 3] {
    [a.p_s, a.p_b, a.y]
}

fn from_coords<S: Scalar>(x: [S; 3]) -> LeaderAction<S> {
    LeaderAction { p_s: x[0], p_b: x[1], y: x[2] }
}

/// After a successful poll the radii of the coordinates that moved restart at `2 rho`.
fn widen<S: Scalar>(radius: &mut [S; 3], from: &[S; 3], to: &LeaderAction<S>, rho: S) {
    let to = coords(to);
    for c in 0..3 {
        if to[c] != from[c] {
            radius[c] = radius[c].max(S::two() * rho);
        }
    }
}

fn sign<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::one()
    } else if x < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

/// Builds and solves the drift-plus-penalty game of slot `k` from the system state.
#[allow(clippy::too_many_arguments)]
pub fn solve_slot<S: Scalar>(
    state: &SlotState<S>,
    slots: &[NanogridSlot<S>],
    market: &MarketSlot<S>,
    nanogrids: &[NanogridParams<S>],
    controls: &[NanogridControl<S>],
    pme: &PmeParams<S>,
    pme_control: &PmeControl<S>,
    mode: HvacMode,
    config: &GameConfig<S>,
) -> Result<SlotSolution<S>> {
    let n = slots.len();
    if nanogrids.len() != n || controls.len() != n || state.t.len() != n || state.h.len() != n {
        return Err(Error::Config(format!("inconsistent nanogrid counts for {n} nanogrids")));
    }
    let mut followers = Vec::with_capacity(n);
    let mut cases = Vec::with_capacity(n);
    for i in 0..n {
        let (t, h) = (state.t[i], state.h[i]);
        followers.push(FollowerProblem::drift_plus_penalty(t, h, &slots[i], &nanogrids[i], &controls[i], mode)?);
        let th = compute_thresholds(t, h, &slots[i], &nanogrids[i], &controls[i]);
        cases.push(threshold_case(&th, h, &nanogrids[i], &controls[i], market.m_s, market.m_b));
    }
    let game = SlotGame {
        followers,
        cases,
        charge: ChargeProblem::new(state.b, pme_control, pme),
        market: *market,
        pme: *pme,
    };
    game.solve(config)
}
