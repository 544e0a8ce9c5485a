//! Follower side: the per-slot drift-plus-penalty problem of a nanogrid, its exact
//! best response, and the bounds on (V_i, Γ_i) that keep indoor temperature in band.

use serde::{Deserialize, Serialize};

use crate::domain::{
    bilinear_trade_cost, HvacMode, LeaderAction, NanogridControl, NanogridEnvelope, NanogridParams, NanogridSlot,
    PriceEnvelope,
};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Closed-form quantities characterizing the follower response in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerThresholds<S> {
    pub alpha: S,
    pub beta: S,
    /// Unconstrained response at zero price; `None` when γ = 0.
    pub vartheta: Option<S>,
    /// Price at which the unconstrained response sits exactly on the kink.
    pub delta: S,
    /// Price sensitivity of the interior response; `None` when γ = 0.
    pub hbar: Option<S>,
}

/// Admissible ranges of the follower tuning for a given scenario envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerBounds<S> {
    pub gamma_min: S,
    pub gamma_max: S,
    pub v_max: S,
    pub lambda: S,
    pub phi: S,
    /// Constant of the drift bound, evaluated at `gamma_min`.
    pub omega_max: S,
}

/// Which piece of the objective the best response lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Stationary point of the export piece (`tp < 0`).
    Selling,
    /// Stationary point of the import piece (`tp > 0`).
    Buying,
    /// Exactly self-sufficient, `tp = 0`.
    Kink,
    LowerBound,
    UpperBound,
}

/// Which shortcut of the threshold rule applies at the price band edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdCase {
    /// Consumption is zero for every admissible price.
    Idle,
    /// Consumption is at the rated maximum for every admissible price.
    Full,
    General,
}

/// Result of a follower best response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse<S> {
    pub e: S,
    pub tp: S,
    pub regime: Regime,
    pub case: ThresholdCase,
    /// `d tp / d p_s` and `d tp / d p_b` at the response.
    pub sensitivity: (S, S),
}

/// Convex piecewise quadratic in `e`:
/// `quad e² + lin e + weight·(p_s max(e-kink, 0) + p_b min(e-kink, 0))` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerProblem<S> {
    pub quad: S,
    pub lin: S,
    pub weight: S,
    /// Consumption at which the nanogrid is self-sufficient, `rp - d`.
    pub kink: S,
    pub lo: S,
    pub hi: S,
}

/// Box on `e` from the rated power and the injection limit.
pub fn feasible_box<S: Scalar>(params: &NanogridParams<S>, slot: &NanogridSlot<S>) -> Result<(S, S)> {
    let lo = (-params.l_max - slot.d + slot.rp).max(S::zero());
    let hi = (params.l_max - slot.d + slot.rp).min(params.e_max);
    if lo > hi {
        return Err(Error::Scenario(format!(
            "empty consumption box [{lo}, {hi}]: l_max = {} too small for d - rp = {}",
            params.l_max,
            slot.d - slot.rp
        )));
    }
    Ok((lo, hi))
}

fn signed_eta<S: Scalar>(params: &NanogridParams<S>, mode: HvacMode) -> S {
    match mode {
        HvacMode::Heating => params.eta,
        HvacMode::Cooling => -params.eta,
    }
}

impl<S: Scalar> FollowerProblem<S> {
    /// Drift-plus-penalty problem for temperature `t` and queue `h` at the start of the slot.
    pub fn drift_plus_penalty(
        t: S,
        h: S,
        slot: &NanogridSlot<S>,
        params: &NanogridParams<S>,
        control: &NanogridControl<S>,
        mode: HvacMode,
    ) -> Result<Self> {
        let (lo, hi) = feasible_box(params, slot)?;
        let eps = params.epsilon;
        let leak = S::one() - eps;
        let eta = signed_eta(params, mode);
        let v = control.v;
        let lin = eps * leak * h * eta
            + S::two() * v * params.gamma * leak * (leak * slot.t_out + eps * t - slot.t_opt) * eta;
        Ok(FollowerProblem {
            quad: v * params.gamma * leak * leak * eta * eta,
            lin,
            weight: v,
            kink: slot.rp - slot.d,
            lo,
            hi,
        })
    }

    /// Instantaneous cost `trade + γ(T⁺ - T_opt)²` (up to a constant) with the
    /// next temperature additionally confined to the comfort band.
    pub fn myopic(t: S, slot: &NanogridSlot<S>, params: &NanogridParams<S>, mode: HvacMode) -> Result<Self> {
        let mut p = Self::drift_plus_penalty(
            t,
            S::zero(),
            slot,
            params,
            &NanogridControl { v: S::one(), gamma_shift: S::zero() },
            mode,
        )?;
        let leak = S::one() - params.epsilon;
        let gain = leak * signed_eta(params, mode);
        let drift = params.epsilon * t + leak * slot.t_out;
        let (a, b) = ((params.t_min - drift) / gain, (params.t_max - drift) / gain);
        let (lo, hi) = (p.lo.max(a.min(b)), p.hi.min(a.max(b)));
        if lo > hi {
            return Err(Error::Scenario(format!("comfort band unreachable from T = {t} within the consumption box")));
        }
        p.lo = lo;
        p.hi = hi;
        Ok(p)
    }

    pub fn tp(&self, e: S) -> S {
        e - self.kink
    }

    pub fn objective(&self, e: S, p_s: S, p_b: S) -> S {
        self.quad * e * e + self.lin * e + self.weight * bilinear_trade_cost(self.tp(e), p_s, p_b)
    }

    /// Interior response sensitivity `weight / (2 quad)`.
    pub fn hbar(&self) -> Option<S> {
        (self.quad > S::zero()).then(|| self.weight / (S::two() * self.quad))
    }

    /// Exact minimizer over the box. Ties go to the smaller consumption.
    pub fn solve(&self, p_s: S, p_b: S) -> (S, Regime) {
        let mut cands: Vec<(S, Regime)> = Vec::with_capacity(5);
        if self.quad > S::zero() {
            let denom = S::two() * self.quad;
            let sell = -(self.lin + self.weight * p_b) / denom;
            if sell > self.lo && sell < self.hi && sell < self.kink {
                cands.push((sell, Regime::Selling));
            }
            let buy = -(self.lin + self.weight * p_s) / denom;
            if buy > self.lo && buy < self.hi && buy > self.kink {
                cands.push((buy, Regime::Buying));
            }
        }
        if self.kink >= self.lo && self.kink <= self.hi {
            cands.push((self.kink, Regime::Kink));
        }
        cands.push((self.lo, Regime::LowerBound));
        cands.push((self.hi, Regime::UpperBound));
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite candidates"));

        let mut best = cands[0];
        let mut best_val = self.objective(best.0, p_s, p_b);
        for &c in &cands[1..] {
            let val = self.objective(c.0, p_s, p_b);
            if val < best_val {
                best = c;
                best_val = val;
            }
        }
        best
    }

    /// Best response together with its price sensitivities.
    pub fn respond(&self, p_s: S, p_b: S, case: ThresholdCase) -> BestResponse<S> {
        let (e, regime) = self.solve(p_s, p_b);
        let slope = self.hbar().map(|h| -h).unwrap_or_else(S::zero);
        let sensitivity = match regime {
            Regime::Buying => (slope, S::zero()),
            Regime::Selling => (S::zero(), slope),
            _ => (S::zero(), S::zero()),
        };
        BestResponse { e, tp: self.tp(e), regime, case, sensitivity }
    }
}

/// Drift-plus-penalty objective of the follower at consumption `e`.
#[allow(clippy::too_many_arguments)]
pub fn p3_objective<S: Scalar>(
    e: S,
    t: S,
    h: S,
    leader: &LeaderAction<S>,
    slot: &NanogridSlot<S>,
    params: &NanogridParams<S>,
    control: &NanogridControl<S>,
    mode: HvacMode,
) -> Result<S> {
    let p = FollowerProblem::drift_plus_penalty(t, h, slot, params, control, mode)?;
    if e < p.lo {
        return Err(Error::Domain(format!("e = {e} below the lower consumption bound {}", p.lo)));
    }
    if e > p.hi {
        return Err(Error::Domain(format!("e = {e} above the upper consumption bound {}", p.hi)));
    }
    Ok(p.objective(e, leader.p_s, leader.p_b))
}

/// Thresholds α, β, ϑ, δ, ħ of the follower in the current slot (heating mode).
pub fn compute_thresholds<S: Scalar>(
    t: S,
    h: S,
    slot: &NanogridSlot<S>,
    params: &NanogridParams<S>,
    control: &NanogridControl<S>,
) -> FollowerThresholds<S> {
    let eps = params.epsilon;
    let leak = S::one() - eps;
    let (eta, gamma, v) = (params.eta, params.gamma, control.v);
    let two = S::two();
    let alpha = two * v * gamma * leak * eta * (leak * slot.t_out + eps * t - slot.t_opt);
    let beta = alpha + two * v * gamma * leak * leak * eta * eta * params.e_max;
    let gap = slot.t_opt - eps * t - leak * slot.t_out;
    let delta = two * gamma * leak * eta * gap
        - eps * leak * h * eta / v
        - two * gamma * leak * leak * eta * eta * (slot.rp - slot.d);
    let positive = gamma > S::zero();
    let hbar = positive.then(|| S::one() / (two * gamma * leak * leak * eta * eta));
    let vartheta = positive.then(|| gap / (leak * eta) - eps * h / (two * v * gamma * leak * eta));
    FollowerThresholds { alpha, beta, vartheta, delta, hbar }
}

/// Classifies the slot against the threshold rule evaluated at the band edges `m_b`, `m_s`.
pub fn threshold_case<S: Scalar>(
    th: &FollowerThresholds<S>,
    h: S,
    params: &NanogridParams<S>,
    control: &NanogridControl<S>,
    m_s: S,
    m_b: S,
) -> ThresholdCase {
    let eps = params.epsilon;
    let queue = -eps * (S::one() - eps) * h * params.eta;
    if control.v * m_b > queue - th.alpha {
        ThresholdCase::Idle
    } else if control.v * m_s < queue - th.beta {
        ThresholdCase::Full
    } else {
        ThresholdCase::General
    }
}

/// Best response of a follower in heating or cooling mode, with the threshold case
/// classified against the band `[m_b, m_s]` of the slot.
#[allow(clippy::too_many_arguments)]
pub fn best_response<S: Scalar>(
    t: S,
    h: S,
    leader: &LeaderAction<S>,
    slot: &NanogridSlot<S>,
    params: &NanogridParams<S>,
    control: &NanogridControl<S>,
    band: (S, S),
    mode: HvacMode,
) -> Result<BestResponse<S>> {
    let problem = FollowerProblem::drift_plus_penalty(t, h, slot, params, control, mode)?;
    let th = compute_thresholds(t, h, slot, params, control);
    let case = threshold_case(&th, h, params, control, band.1, band.0);
    Ok(problem.respond(leader.p_s, leader.p_b, case))
}

/// Largest admissible penalty weight V_i for the given envelopes.
pub fn v_max<S: Scalar>(params: &NanogridParams<S>, env: &NanogridEnvelope<S>, prices: &PriceEnvelope<S>) -> S {
    let leak = S::one() - params.epsilon;
    let band = params.t_max - params.t_min;
    let phi = params.phi(env);
    let lambda = env.t_opt_max - env.t_opt_min;
    leak * params.eta * (band - phi)
        / (prices.m_s_max - prices.m_b_min
            + S::two() * params.gamma * leak * params.eta * (phi + params.epsilon * band + lambda))
}

/// Comfort-preserving bounds on Γ_i for penalty weight `v`, together with V_i^max.
///
/// α and β are bounded over every temperature in the comfort band and every
/// outdoor/target temperature in the envelope.
pub fn compute_bounds<S: Scalar>(
    params: &NanogridParams<S>,
    v: S,
    env: &NanogridEnvelope<S>,
    prices: &PriceEnvelope<S>,
) -> Result<FollowerBounds<S>> {
    params.validate()?;
    params.check_assumptions(env, 0)?;
    let eps = params.epsilon;
    let leak = S::one() - eps;
    let eta = params.eta;
    let two = S::two();
    let scale = two * v * params.gamma * leak * eta;
    let alpha_min = scale * (leak * env.t_out_min + eps * params.t_min - env.t_opt_max);
    let beta_max =
        scale * (leak * env.t_out_max + eps * params.t_max - env.t_opt_min) + scale * leak * eta * params.e_max;
    let c = eps * leak * eta;
    let gamma_min =
        (v * prices.m_b_min + alpha_min) / -c - (params.t_max - leak * (env.t_out_max + eta * params.e_max)) / eps;
    let gamma_max = (v * prices.m_s_max + beta_max) / -c - (params.t_min - leak * env.t_out_min) / eps;
    let lo = gamma_min + env.t_out_min;
    let hi = gamma_min + env.t_out_max + eta * params.e_max;
    Ok(FollowerBounds {
        gamma_min,
        gamma_max,
        v_max: v_max(params, env, prices),
        lambda: env.t_opt_max - env.t_opt_min,
        phi: params.phi(env),
        omega_max: S::half() * leak * leak * (lo * lo).max(hi * hi),
    })
}

/// Tolerance for comparing a control against bounds computed in floating point.
fn slack<S: Scalar>(x: S) -> S {
    S::tol(1e-9) * (S::one() + x.abs())
}

/// Rejects tuning outside the comfort-preserving region.
pub fn validate_control<S: Scalar>(
    control: &NanogridControl<S>,
    params: &NanogridParams<S>,
    env: &NanogridEnvelope<S>,
    prices: &PriceEnvelope<S>,
    index: usize,
) -> Result<FollowerBounds<S>> {
    let b = compute_bounds(params, control.v, env, prices).map_err(|e| match e {
        Error::Assumption { label, detail, .. } => Error::Assumption { label, nanogrid: index, detail },
        other => other,
    })?;
    if !(control.v > S::zero()) {
        return Err(Error::Config(format!("nanogrid {index}: v_i must be positive, got {}", control.v)));
    }
    if control.v > b.v_max + slack(b.v_max) {
        return Err(Error::Config(format!(
            "nanogrid {index}: v_i = {} exceeds its upper bound v_max = {}",
            control.v, b.v_max
        )));
    }
    if control.gamma_shift < b.gamma_min - slack(b.gamma_min) || control.gamma_shift > b.gamma_max + slack(b.gamma_max)
    {
        return Err(Error::Config(format!(
            "nanogrid {index}: queue shift {} outside [gamma_min, gamma_max] = [{}, {}]",
            control.gamma_shift, b.gamma_min, b.gamma_max
        )));
    }
    Ok(b)
}

/// Default tuning: V_i = V_i^max and Γ_i = Γ_i^min.
pub fn default_control<S: Scalar>(
    params: &NanogridParams<S>,
    env: &NanogridEnvelope<S>,
    prices: &PriceEnvelope<S>,
) -> Result<NanogridControl<S>> {
    let v = v_max(params, env, prices);
    if !(v > S::zero()) {
        return Err(Error::Config(format!("v_max = {v} is not positive")));
    }
    let b = compute_bounds(params, v, env, prices)?;
    Ok(NanogridControl { v, gamma_shift: b.gamma_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::thermal_step;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> NanogridParams<f64> {
        NanogridParams::reference(0.95)
    }

    fn control() -> NanogridControl<f64> {
        NanogridControl { v: 0.6, gamma_shift: -75.0 }
    }

    fn slot() -> NanogridSlot<f64> {
        NanogridSlot { rp: 1.5, d: 1.0, t_out: 50.0, t_opt: 71.0 }
    }

    fn leader(p_s: f64, p_b: f64) -> LeaderAction<f64> {
        LeaderAction { p_s, p_b, y: 0.0 }
    }

    #[test]
    fn objective_vanishes_at_origin() {
        let s = NanogridSlot { rp: 1.0, d: 1.0, t_out: 50.0, t_opt: 70.0 };
        let v = p3_objective(0.0, 70.0, 0.0, &leader(8.0, 4.0), &s, &params(), &control(), HvacMode::Heating).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn objective_matches_term_by_term_formula() {
        let (p, c, s) = (params(), control(), slot());
        let (t, h, e, ps, pb) = (69.0, -6.0, 2.3, 9.0, 4.0);
        let (eps, eta, g, v) = (p.epsilon, p.eta, p.gamma, c.v);
        let x = s.d - s.rp + e;
        let expected = v * g * (1.0 - eps).powi(2) * (eta * e).powi(2)
            + (eps * (1.0 - eps) * h + 2.0 * v * g * (1.0 - eps) * ((1.0 - eps) * s.t_out + eps * t - s.t_opt))
                * eta
                * e
            + v * (0.5 * (ps - pb) * x.abs() + 0.5 * (ps + pb) * x);
        let got = p3_objective(e, t, h, &leader(ps, pb), &s, &p, &c, HvacMode::Heating).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-13);
    }

    #[test]
    fn objective_difference_matches_drift_bound_terms() {
        let (p, c, s) = (params(), control(), slot());
        let (t, h, ps, pb) = (72.0, -3.0, 10.0, 3.5);
        let l = leader(ps, pb);
        let rhs = |e: f64| {
            let t_next = thermal_step(t, s.t_out, e, &p, HvacMode::Heating);
            p.epsilon * (1.0 - p.epsilon) * h * p.eta * e
                + c.v * (bilinear_trade_cost(s.d + e - s.rp, ps, pb) + p.gamma * (t_next - s.t_opt).powi(2))
        };
        for e in [0.5, 1.7, 4.9] {
            let lhs = p3_objective(e, t, h, &l, &s, &p, &c, HvacMode::Heating).unwrap()
                - p3_objective(0.0, t, h, &l, &s, &p, &c, HvacMode::Heating).unwrap();
            assert_relative_eq!(lhs, rhs(e) - rhs(0.0), max_relative = 1e-10);
        }
    }

    #[test]
    fn objective_rejects_out_of_box() {
        let err = p3_objective(6.0, 70.0, 0.0, &leader(8.0, 4.0), &slot(), &params(), &control(), HvacMode::Heating)
            .unwrap_err();
        assert!(err.to_string().contains("upper"), "{err}");
    }

    #[test]
    fn empty_box_is_scenario_error() {
        let mut p = params();
        p.l_max = 1.0;
        let s = NanogridSlot { rp: 0.0, d: 7.0, t_out: 50.0, t_opt: 70.0 };
        assert!(matches!(feasible_box(&p, &s), Err(Error::Scenario(_))));
    }

    #[test]
    fn threshold_shortcuts() {
        let (p, c, s) = (params(), control(), slot());
        // A large positive queue makes any heating expensive.
        let r = best_response(76.0, 5.0, &leader(9.0, 3.0), &s, &p, &c, (3.0, 12.0), HvacMode::Heating).unwrap();
        assert_eq!(r.case, ThresholdCase::Idle);
        assert_eq!(r.e, 0.0);
        let r = best_response(66.0, -40.0, &leader(9.0, 3.0), &s, &p, &c, (3.0, 12.0), HvacMode::Heating).unwrap();
        assert_eq!(r.case, ThresholdCase::Full);
        assert_eq!(r.e, 5.0);
    }

    #[test]
    fn thresholds_examples() {
        let (mut p, c, s) = (params(), control(), slot());
        let th = compute_thresholds(70.0, -5.0, &s, &p, &c);
        let expect = 2.0 * c.v * p.gamma * (1.0 - p.epsilon).powi(2) * p.eta.powi(2) * p.e_max;
        assert_relative_eq!(th.beta - th.alpha, expect, max_relative = 1e-12);
        assert!(th.hbar.unwrap() > 0.0);
        let at_opt = NanogridSlot { t_out: 70.0, t_opt: 70.0, ..s };
        assert!(compute_thresholds(70.0, 0.0, &at_opt, &p, &c).vartheta.unwrap().abs() < 1e-12);
        p.gamma = 0.0;
        let th = compute_thresholds(70.0, -5.0, &s, &p, &c);
        assert_eq!((th.alpha, th.beta, th.hbar), (0.0, 0.0, None));
    }

    #[test]
    fn vartheta_is_zero_price_response() {
        let (p, c, s) = (params(), control(), slot());
        let pr = FollowerProblem::drift_plus_penalty(68.0, -7.0, &s, &p, &c, HvacMode::Heating).unwrap();
        let th = compute_thresholds(68.0, -7.0, &s, &p, &c);
        assert_relative_eq!(th.vartheta.unwrap(), -pr.lin / (2.0 * pr.quad), max_relative = 1e-12);
        assert_relative_eq!(th.hbar.unwrap(), pr.hbar().unwrap(), max_relative = 1e-12);
        // δ is the price that puts the unconstrained response on the kink.
        let e_at = th.vartheta.unwrap() - th.delta * th.hbar.unwrap();
        assert_relative_eq!(e_at, s.rp - s.d, epsilon = 1e-9);
    }

    #[test]
    fn bounds_examples() {
        let p = params();
        let env = NanogridEnvelope { t_out_min: 40.0, t_out_max: 60.0, t_opt_min: 70.0, t_opt_max: 70.0 };
        let prices = PriceEnvelope { m_s_max: 12.0, m_b_min: 3.0 };
        let v = v_max(&p, &env, &prices);
        let b = compute_bounds(&p, v, &env, &prices).unwrap();
        assert_relative_eq!(b.phi, 4.75, max_relative = 1e-12);
        assert_eq!(b.lambda, 0.0);
        assert!(b.v_max > 0.0);
        assert_relative_eq!(b.gamma_min, b.gamma_max, max_relative = 1e-12);
        let b = compute_bounds(&p, 0.5 * v, &env, &prices).unwrap();
        assert!(b.gamma_min < b.gamma_max);
        let b = compute_bounds(&p, 1.5 * v, &env, &prices).unwrap();
        assert!(b.gamma_min > b.gamma_max);
    }

    #[test]
    fn reference_band_gives_positive_v_max() {
        let prices = PriceEnvelope { m_s_max: 15.0, m_b_min: 3.0 };
        for eps in [0.93, 0.95, 0.98] {
            let env = NanogridEnvelope { t_out_min: 30.0, t_out_max: 65.0, t_opt_min: 68.0, t_opt_max: 74.0 };
            assert!(v_max(&NanogridParams::reference(eps), &env, &prices) > 0.0);
        }
    }

    #[test]
    fn override_above_v_max_rejected() {
        let p = params();
        let env = NanogridEnvelope { t_out_min: 40.0, t_out_max: 60.0, t_opt_min: 69.0, t_opt_max: 72.0 };
        let prices = PriceEnvelope { m_s_max: 12.0, m_b_min: 3.0 };
        let mut c = default_control(&p, &env, &prices).unwrap();
        assert!(validate_control(&c, &p, &env, &prices, 2).is_ok());
        c.v *= 1.01;
        let err = validate_control(&c, &p, &env, &prices, 2).unwrap_err();
        assert!(err.to_string().contains("v_max"), "{err}");
    }

    fn brute(p: &FollowerProblem<f64>, ps: f64, pb: f64, n: usize) -> (f64, f64) {
        let mut best = (p.lo, p.objective(p.lo, ps, pb));
        for j in 0..=n {
            let e = p.lo + (p.hi - p.lo) * j as f64 / n as f64;
            let v = p.objective(e, ps, pb);
            if v < best.1 {
                best = (e, v);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn solve_beats_grid(t in 66.0f64..77.0, h in -15.0f64..5.0, rp in 0.0f64..4.0, d in 0.0f64..4.0,
                            t_out in 30.0f64..70.0, t_opt in 67.0f64..74.0, pb in 3.0f64..8.0, gap in 0.01f64..8.0,
                            eps in 0.93f64..0.98, v in 0.05f64..1.0, gamma in 0.0f64..0.05) {
            let mut p = NanogridParams::reference(eps);
            p.gamma = gamma;
            let c = NanogridControl { v, gamma_shift: 0.0 };
            let s = NanogridSlot { rp, d, t_out, t_opt };
            let pr = FollowerProblem::drift_plus_penalty(t, h, &s, &p, &c, HvacMode::Heating).unwrap();
            let (e, _) = pr.solve(pb + gap, pb);
            let ours = pr.objective(e, pb + gap, pb);
            let (_, grid) = brute(&pr, pb + gap, pb, 2000);
            prop_assert!(ours <= grid + 1e-9 * (1.0 + grid.abs()));
        }

        #[test]
        fn response_nonincreasing_in_prices(t in 66.0f64..77.0, h in -15.0f64..5.0, rp in 0.0f64..4.0, d in 0.0f64..4.0,
                                            pb in 3.0f64..8.0, gap in 0.02f64..8.0, bump in 0.0f64..2.0) {
            let s = NanogridSlot { rp, d, t_out: 50.0, t_opt: 71.0 };
            let pr = FollowerProblem::drift_plus_penalty(t, h, &s, &params(), &control(), HvacMode::Heating).unwrap();
            let (e0, _) = pr.solve(pb + gap, pb);
            let (e1, _) = pr.solve(pb + gap + bump, pb);
            let (e2, _) = pr.solve(pb + gap, (pb + bump).min(pb + gap - 0.01));
            prop_assert!(e1 <= e0 + 1e-12);
            prop_assert!(e2 <= e0 + 1e-12);
        }
    }
}
