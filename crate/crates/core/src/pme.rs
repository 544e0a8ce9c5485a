//! Leader side: the PME's drift-plus-penalty objective, its exact charging rule,
//! price subgradients, and the bounds on (V_P, θ) that keep the battery in range.

use serde::{Deserialize, Serialize};

use crate::domain::{
    battery_cost, bilinear_trade_cost, grid_residual, grid_settlement, LeaderAction, MarketSlot, PmeControl, PmeParams,
    PriceEnvelope,
};
use crate::error::{Error, Result};
use crate::nanogrid::BestResponse;
use crate::num::Scalar;

/// Admissible ranges of the leader tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderBounds<S> {
    pub theta_min: S,
    pub theta_max: S,
    pub v_p_max: S,
    pub c_min: S,
    pub c_max: S,
    pub omega_p_max: S,
}

/// Slopes of the leader objective with respect to its three decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientSet<S> {
    pub g_ps: S,
    pub g_pb: S,
    pub g_y: S,
}

/// A follower's injection and how it reacts to each posted price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection<S> {
    pub tp: S,
    pub d_tp_d_ps: S,
    pub d_tp_d_pb: S,
}

impl<S: Scalar> From<&BestResponse<S>> for Injection<S> {
    fn from(r: &BestResponse<S>) -> Self {
        Injection { tp: r.tp, d_tp_d_ps: r.sensitivity.0, d_tp_d_pb: r.sensitivity.1 }
    }
}

/// Checks the price band and the charge box.
pub fn check_action<S: Scalar>(action: &LeaderAction<S>, market: &MarketSlot<S>, params: &PmeParams<S>) -> Result<()> {
    if !(market.m_b <= action.p_b && action.p_b <= action.p_s && action.p_s <= market.m_s) {
        return Err(Error::Domain(format!(
            "prices (p_s = {}, p_b = {}) outside the band m_b = {} <= p_b <= p_s <= m_s = {}",
            action.p_s, action.p_b, market.m_b, market.m_s
        )));
    }
    if action.y < -params.u_dmax || action.y > params.u_cmax {
        return Err(Error::Domain(format!("charge y = {} outside [{}, {}]", action.y, -params.u_dmax, params.u_cmax)));
    }
    Ok(())
}

/// Drift-plus-penalty objective of the PME with battery queue `b`.
pub fn p4_objective<S: Scalar>(
    action: &LeaderAction<S>,
    tps: &[S],
    b: S,
    market: &MarketSlot<S>,
    control: &PmeControl<S>,
    params: &PmeParams<S>,
) -> Result<S> {
    check_action(action, market, params)?;
    Ok(p4_value(action, tps, b, market, control.v_p, params.c_b))
}

/// Unchecked evaluation of the leader objective.
pub fn p4_value<S: Scalar>(action: &LeaderAction<S>, tps: &[S], b: S, market: &MarketSlot<S>, v_p: S, c_b: S) -> S {
    let revenue: S = tps.iter().map(|&tp| bilinear_trade_cost(tp, action.p_s, action.p_b)).sum();
    let residual = grid_residual(tps, market.g_t, action.y);
    b * action.y - v_p * revenue
        + v_p * (grid_settlement(residual, market.m_s, market.m_b) + battery_cost(action.y, c_b))
}

/// Minimizer of `(b + v_p m) y + ½ v_p c_b y²` over the charge box.
pub fn optimal_charge<S: Scalar>(b: S, m: S, control: &PmeControl<S>, params: &PmeParams<S>) -> S {
    let lin = b + control.v_p * m;
    let curv = control.v_p * params.c_b;
    if curv > S::zero() {
        if lin >= curv * params.u_dmax {
            -params.u_dmax
        } else if lin <= -curv * params.u_cmax {
            params.u_cmax
        } else {
            -lin / curv
        }
    } else if lin > S::zero() {
        -params.u_dmax
    } else if lin < S::zero() {
        params.u_cmax
    } else {
        S::zero()
    }
}

/// Battery sub-problem: minimize over `y` the part of the leader objective that
/// depends on it, for a fixed net follower demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeProblem<S> {
    /// Weight of `y` in the drift term (the battery queue, or zero when ignored).
    pub backlog: S,
    pub v_p: S,
    pub c_b: S,
    pub y_lo: S,
    pub y_hi: S,
}

impl<S: Scalar> ChargeProblem<S> {
    pub fn new(backlog: S, control: &PmeControl<S>, params: &PmeParams<S>) -> Self {
        ChargeProblem { backlog, v_p: control.v_p, c_b: params.c_b, y_lo: -params.u_dmax, y_hi: params.u_cmax }
    }

    /// Objective in `y` where `net = Σtp - g_t`.
    pub fn objective(&self, y: S, net: S, m_s: S, m_b: S) -> S {
        self.backlog * y + self.v_p * (grid_settlement(net + y, m_s, m_b) + battery_cost(y, self.c_b))
    }

    /// Exact minimizer; the objective is convex with one kink at `y = -net`.
    pub fn solve(&self, net: S, m_s: S, m_b: S) -> S {
        let mut cands = vec![self.y_lo, self.y_hi];
        let kink = -net;
        if kink > self.y_lo && kink < self.y_hi {
            cands.push(kink);
        }
        let curv = self.v_p * self.c_b;
        if curv > S::zero() {
            let buy = -(self.backlog + self.v_p * m_s) / curv;
            if buy > self.y_lo && buy < self.y_hi && buy > kink {
                cands.push(buy);
            }
            let sell = -(self.backlog + self.v_p * m_b) / curv;
            if sell > self.y_lo && sell < self.y_hi && sell < kink {
                cands.push(sell);
            }
        }
        cands.sort_by(|a, b| a.partial_cmp(b).expect("finite candidates"));
        let mut best = cands[0];
        let mut best_val = self.objective(best, net, m_s, m_b);
        for &y in &cands[1..] {
            let val = self.objective(y, net, m_s, m_b);
            if val < best_val {
                best = y;
                best_val = val;
            }
        }
        best
    }

    /// Marginal value of one more unit of follower demand at charge `y`.
    ///
    /// When the battery exactly absorbs the imbalance from inside its box, extra
    /// demand is met by discharging, so the marginal value is the battery's own
    /// shadow price. Otherwise it is the main-grid price on the residual's side.
    pub fn marginal(&self, y: S, net: S, m_s: S, m_b: S) -> S {
        let residual = net + y;
        if residual == S::zero() && y > self.y_lo && y < self.y_hi && self.v_p > S::zero() {
            (-(self.backlog + self.v_p * self.c_b * y) / self.v_p).clamp_to(m_b, m_s)
        } else {
            residual_price(residual, m_s, m_b)
        }
    }
}

/// Main-grid price applied to a signed residual; zero counts as selling.
pub fn residual_price<S: Scalar>(residual: S, m_s: S, m_b: S) -> S {
    if residual > S::zero() {
        m_s
    } else {
        m_b
    }
}

/// Subgradients with the marginal energy value `mu` given explicitly.
pub fn subgradients_at<S: Scalar>(
    action: &LeaderAction<S>,
    followers: &[Injection<S>],
    b: S,
    mu: S,
    v_p: S,
    c_b: S,
) -> SubgradientSet<S> {
    let mut g_ps = S::zero();
    let mut g_pb = S::zero();
    for f in followers {
        g_ps -= v_p * (f.tp.pos() + (action.p_s - mu) * f.d_tp_d_ps);
        g_pb -= v_p * (f.tp.neg_part() + (action.p_b - mu) * f.d_tp_d_pb);
    }
    SubgradientSet { g_ps, g_pb, g_y: b + v_p * c_b * action.y + v_p * mu }
}

/// Subgradients of the leader objective, with the grid price selected by the sign
/// of the current residual (zero selects `m_b`).
pub fn subgradients<S: Scalar>(
    action: &LeaderAction<S>,
    followers: &[Injection<S>],
    b: S,
    market: &MarketSlot<S>,
    control: &PmeControl<S>,
    params: &PmeParams<S>,
) -> SubgradientSet<S> {
    let tps: Vec<S> = followers.iter().map(|f| f.tp).collect();
    let mu = residual_price(grid_residual(&tps, market.g_t, action.y), market.m_s, market.m_b);
    subgradients_at(action, followers, b, mu, control.v_p, params.c_b)
}

fn c_range<S: Scalar>(params: &PmeParams<S>) -> (S, S) {
    let a = params.c_b * params.u_cmax;
    let b = -params.c_b * params.u_dmax;
    (a.min(b), a.max(b))
}

/// Largest admissible V_P.
pub fn v_p_max<S: Scalar>(params: &PmeParams<S>, prices: &PriceEnvelope<S>) -> S {
    let (c_min, c_max) = c_range(params);
    (params.e_max_cap - params.e_min - params.u_cmax - params.u_dmax)
        / (prices.m_s_max - prices.m_b_min + c_max - c_min)
}

/// Battery-preserving bounds on θ for weight `v_p`, together with V_P^max.
pub fn compute_bounds<S: Scalar>(params: &PmeParams<S>, v_p: S, prices: &PriceEnvelope<S>) -> Result<LeaderBounds<S>> {
    params.validate()?;
    let (c_min, c_max) = c_range(params);
    Ok(LeaderBounds {
        theta_min: params.u_cmax - params.e_max_cap - v_p * prices.m_b_min - v_p * c_min,
        theta_max: -params.u_dmax - params.e_min - v_p * prices.m_s_max - v_p * c_max,
        v_p_max: v_p_max(params, prices),
        c_min,
        c_max,
        omega_p_max: S::half() * (params.u_cmax * params.u_cmax).max(params.u_dmax * params.u_dmax),
    })
}

fn slack<S: Scalar>(x: S) -> S {
    S::tol(1e-9) * (S::one() + x.abs())
}

/// Rejects tuning outside the battery-preserving region.
pub fn validate_control<S: Scalar>(
    control: &PmeControl<S>,
    params: &PmeParams<S>,
    prices: &PriceEnvelope<S>,
) -> Result<LeaderBounds<S>> {
    let b = compute_bounds(params, control.v_p, prices)?;
    if !(control.v_p > S::zero()) {
        return Err(Error::Config(format!("v_p must be positive, got {}", control.v_p)));
    }
    if control.v_p > b.v_p_max + slack(b.v_p_max) {
        return Err(Error::Config(format!("v_p = {} exceeds its upper bound v_p_max = {}", control.v_p, b.v_p_max)));
    }
    if control.theta < b.theta_min - slack(b.theta_min) || control.theta > b.theta_max + slack(b.theta_max) {
        return Err(Error::Config(format!(
            "battery queue shift {} outside [theta_min, theta_max] = [{}, {}]",
            control.theta, b.theta_min, b.theta_max
        )));
    }
    Ok(b)
}

/// Default tuning: V_P = V_P^max and θ = θ^min.
pub fn default_control<S: Scalar>(params: &PmeParams<S>, prices: &PriceEnvelope<S>) -> Result<PmeControl<S>> {
    let v_p = v_p_max(params, prices);
    let b = compute_bounds(params, v_p, prices)?;
    Ok(PmeControl { v_p, theta: b.theta_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> PmeParams<f64> {
        PmeParams::reference()
    }

    fn prices() -> PriceEnvelope<f64> {
        PriceEnvelope { m_s_max: 12.0, m_b_min: 3.0 }
    }

    #[test]
    fn objective_zero_and_hand_point() {
        let c = PmeControl { v_p: 0.5, theta: -20.0 };
        let m = MarketSlot { m_s: 12.0, m_b: 3.0, g_t: 0.0 };
        let a = LeaderAction { p_s: 10.0, p_b: 5.0, y: 0.0 };
        assert_eq!(p4_objective(&a, &[0.0], 0.0, &m, &c, &params()).unwrap(), 0.0);
        // Buys 2 kWh from the follower at 10, residual 2 + 0.5 - 1 = 1.5 bought at 12.
        let a = LeaderAction { p_s: 10.0, p_b: 5.0, y: 0.5 };
        let m = MarketSlot { g_t: 1.0, ..m };
        let got = p4_objective(&a, &[2.0], -4.0, &m, &c, &params()).unwrap();
        let hand = -4.0 * 0.5 - 0.5 * 20.0 + 0.5 * (12.0 * 1.5 + 0.005 * 0.25);
        assert_relative_eq!(got, hand, max_relative = 1e-14);
    }

    #[test]
    fn objective_rejects_bad_action() {
        let c = PmeControl { v_p: 0.5, theta: -20.0 };
        let m = MarketSlot { m_s: 12.0, m_b: 3.0, g_t: 0.0 };
        let a = LeaderAction { p_s: 13.0, p_b: 5.0, y: 0.0 };
        assert!(matches!(p4_objective(&a, &[], 0.0, &m, &c, &params()), Err(Error::Domain(_))));
        let a = LeaderAction { p_s: 10.0, p_b: 5.0, y: 2.0 };
        assert!(matches!(p4_objective(&a, &[], 0.0, &m, &c, &params()), Err(Error::Domain(_))));
    }

    #[test]
    fn charge_examples() {
        let c = PmeControl { v_p: 0.5, theta: 0.0 };
        assert_eq!(optimal_charge(-0.5 * 4.0, 4.0, &c, &params()), 0.0);
        assert_eq!(optimal_charge(100.0, 4.0, &c, &params()), -1.0);
        assert_eq!(optimal_charge(-100.0, 4.0, &c, &params()), 1.0);
        let flat = PmeParams { c_b: 0.0, ..params() };
        assert_eq!(optimal_charge(1.0, 4.0, &c, &flat), -1.0);
        assert_eq!(optimal_charge(-3.0, 4.0, &c, &flat), 1.0);
    }

    #[test]
    fn zero_injection_subgradients() {
        let c = PmeControl { v_p: 0.7, theta: 0.0 };
        let m = MarketSlot { m_s: 12.0, m_b: 3.0, g_t: 2.0 };
        let a = LeaderAction { p_s: 8.0, p_b: 4.0, y: 0.5 };
        let zero = Injection { tp: 0.0, d_tp_d_ps: 0.0, d_tp_d_pb: 0.0 };
        let g = subgradients(&a, &[zero, zero], -3.0, &m, &c, &params());
        assert_eq!((g.g_ps, g.g_pb), (0.0, 0.0));
        assert_relative_eq!(g.g_y, -3.0 + 0.01 * 0.7 * 0.5 + 0.7 * 3.0);
    }

    #[test]
    fn buying_followers_pull_g_ps_negative() {
        let c = PmeControl { v_p: 0.7, theta: 0.0 };
        let m = MarketSlot { m_s: 12.0, m_b: 3.0, g_t: 0.0 };
        let a = LeaderAction { p_s: 8.0, p_b: 4.0, y: 0.0 };
        let fixed = Injection { tp: 3.0, d_tp_d_ps: 0.0, d_tp_d_pb: 0.0 };
        let g = subgradients(&a, &[fixed], 0.0, &m, &c, &params());
        assert_relative_eq!(g.g_ps, -0.7 * 3.0);
    }

    #[test]
    fn bounds_examples() {
        let b = compute_bounds(&params(), 0.5, &prices()).unwrap();
        assert_relative_eq!(b.c_min, -0.01);
        assert_relative_eq!(b.c_max, 0.01);
        assert_relative_eq!(b.v_p_max, 12.0 / (9.0 + 0.02), max_relative = 1e-14);
        assert_relative_eq!(b.omega_p_max, 0.5);
        let flat = PmeParams { c_b: 0.0, ..params() };
        let b = compute_bounds(&flat, 0.5, &prices()).unwrap();
        assert_eq!(b.c_min, -b.c_max);
        let tight = PmeParams { e_max_cap: 3.5, ..params() };
        assert!(matches!(compute_bounds(&tight, 0.5, &prices()), Err(Error::Config(_))));
    }

    #[test]
    fn override_above_v_p_max_rejected() {
        let mut c = default_control(&params(), &prices()).unwrap();
        assert!(validate_control(&c, &params(), &prices()).is_ok());
        c.v_p *= 1.01;
        assert!(validate_control(&c, &params(), &prices()).unwrap_err().to_string().contains("v_p_max"));
    }

    proptest! {
        #[test]
        fn theta_interval_nonempty_below_v_p_max(frac in 0.0f64..1.0, ms in 3.5f64..30.0, cb in 0.0f64..0.1,
                                                  uc in 0.1f64..3.0, ud in 0.1f64..3.0, cap in 0.5f64..20.0) {
            let p = PmeParams { e_min: 1.0, e_max_cap: 1.0 + uc + ud + cap, u_cmax: uc, u_dmax: ud, c_b: cb };
            let pr = PriceEnvelope { m_s_max: ms, m_b_min: 3.0 };
            let v = frac * v_p_max(&p, &pr);
            let b = compute_bounds(&p, v, &pr).unwrap();
            prop_assert!(b.theta_min <= b.theta_max + 1e-12);
        }

        #[test]
        fn charge_problem_is_exact(backlog in -40.0f64..40.0, net in -3.0f64..3.0, v_p in 0.01f64..2.0,
                                   cb in 0.0f64..0.5, mb in 1.0f64..5.0, spread in 0.0f64..10.0) {
            let p = PmeParams { c_b: cb, ..params() };
            let cp = ChargeProblem::new(backlog, &PmeControl { v_p, theta: 0.0 }, &p);
            let ms = mb + spread;
            let y = cp.solve(net, ms, mb);
            let ours = cp.objective(y, net, ms, mb);
            for j in 0..=4000 {
                let g = -1.0 + 2.0 * j as f64 / 4000.0;
                prop_assert!(ours <= cp.objective(g, net, ms, mb) + 1e-10 * (1.0 + ours.abs()));
            }
        }

        #[test]
        fn objective_strictly_convex_in_y(y in -0.9f64..0.9, h in 1e-3f64..0.1, tp in -5.0f64..5.0, g_t in -10.0f64..10.0) {
            let c = PmeControl { v_p: 0.8, theta: 0.0 };
            let m = MarketSlot { m_s: 12.0, m_b: 3.0, g_t };
            let f = |y| p4_value(&LeaderAction { p_s: 9.0, p_b: 4.0, y }, &[tp], -10.0, &m, c.v_p, 0.01);
            prop_assert!(f(y + h) - 2.0 * f(y) + f(y - h) > 0.0);
        }
    }
}
