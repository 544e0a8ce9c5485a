//! Data types and physical/economic primitives shared by the leader and the followers.
//!
//! Units: temperatures in °F, energy in kWh per one-hour slot, money in cents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Whether the HVAC unit adds or removes heat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HvacMode {
    #[default]
    Heating,
    Cooling,
}

impl HvacMode {
    /// `+1` when heating, `-1` when cooling.
    pub fn sign<S: Scalar>(self) -> S {
        match self {
            HvacMode::Heating => S::one(),
            HvacMode::Cooling => -S::one(),
        }
    }
}

/// Physical constants of one nanogrid and its HVAC unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NanogridParams<S> {
    /// Thermal inertia, strictly inside (0, 1).
    pub epsilon: S,
    /// Energy conversion coefficient (°F per kWh).
    pub eta: S,
    /// Rated HVAC consumption per slot.
    pub e_max: S,
    pub t_min: S,
    pub t_max: S,
    /// Largest admissible magnitude of the injection power.
    pub l_max: S,
    /// Discomfort weight (cent per °F²).
    pub gamma: S,
}

impl<S: Scalar> NanogridParams<S> {
    /// Reference household: 5 kWh HVAC, η = 15, comfort band 66–77 °F, γ = 0.01.
    pub fn reference(epsilon: S) -> Self {
        NanogridParams {
            epsilon,
            eta: S::lit(15.0),
            e_max: S::lit(5.0),
            t_min: S::lit(66.0),
            t_max: S::lit(77.0),
            l_max: S::lit(15.0),
            gamma: S::lit(0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let z = S::zero();
        check(self.epsilon > z && self.epsilon < S::one(), "epsilon must lie in (0, 1)")?;
        check(self.eta > z, "eta must be positive")?;
        check(self.e_max > z, "e_max must be positive")?;
        check(self.l_max > z, "l_max must be positive")?;
        check(self.gamma >= z, "gamma must be nonnegative")?;
        check(self.t_min < self.t_max, "t_min must be below t_max")?;
        check(
            [self.epsilon, self.eta, self.e_max, self.l_max, self.gamma, self.t_min, self.t_max]
                .iter()
                .all(|v| v.is_finite()),
            "nanogrid parameters must be finite",
        )
    }

    /// Span of the outdoor-temperature envelope that the comfort bounds must absorb.
    pub fn phi(&self, env: &NanogridEnvelope<S>) -> S {
        (S::one() - self.epsilon) * (env.t_out_max + self.eta * self.e_max - env.t_out_min)
    }

    /// Checks the three feasibility assumptions under which the comfort band can be
    /// guaranteed, against the outdoor envelope of nanogrid `index`.
    pub fn check_assumptions(&self, env: &NanogridEnvelope<S>, index: usize) -> Result<()> {
        if env.t_out_max > self.t_max {
            return Err(Error::Assumption {
                label: 'a',
                nanogrid: index,
                detail: format!("max outdoor temperature {} exceeds t_max {}", env.t_out_max, self.t_max),
            });
        }
        if self.eta * self.e_max + env.t_out_min < self.t_min {
            return Err(Error::Assumption {
                label: 'b',
                nanogrid: index,
                detail: format!(
                    "eta*e_max + min outdoor temperature = {} is below t_min {}",
                    self.eta * self.e_max + env.t_out_min,
                    self.t_min
                ),
            });
        }
        let phi = self.phi(env);
        if self.t_max - self.t_min <= phi {
            return Err(Error::Assumption {
                label: 'c',
                nanogrid: index,
                detail: format!("comfort band width {} does not exceed phi = {}", self.t_max - self.t_min, phi),
            });
        }
        Ok(())
    }
}

/// Lyapunov tuning of one follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NanogridControl<S> {
    /// Penalty weight V_i.
    pub v: S,
    /// Shift Γ_i of the virtual temperature queue H = T + Γ.
    pub gamma_shift: S,
}

/// Battery constants of the PME.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmeParams<S> {
    pub e_min: S,
    pub e_max_cap: S,
    pub u_cmax: S,
    pub u_dmax: S,
    /// Amortized battery cost coefficient (cent per kWh²).
    pub c_b: S,
}

impl<S: Scalar> PmeParams<S> {
    /// Reference battery: 2–16 kWh, 1 kWh per slot either way, c_b = 0.01.
    pub fn reference() -> Self {
        PmeParams { e_min: S::lit(2.0), e_max_cap: S::lit(16.0), u_cmax: S::one(), u_dmax: S::one(), c_b: S::lit(0.01) }
    }

    pub fn validate(&self) -> Result<()> {
        let z = S::zero();
        check(self.e_min < self.e_max_cap, "e_min must be below e_max_cap")?;
        check(self.u_cmax > z, "u_cmax must be positive")?;
        check(self.u_dmax > z, "u_dmax must be positive")?;
        check(self.c_b >= z, "c_b must be nonnegative")?;
        check(
            self.e_max_cap - self.e_min > self.u_cmax + self.u_dmax,
            "battery capacity gap e_max_cap - e_min must exceed u_cmax + u_dmax",
        )
    }

    pub fn charge_box(&self) -> (S, S) {
        (-self.u_dmax, self.u_cmax)
    }
}

/// Lyapunov tuning of the leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmeControl<S> {
    pub v_p: S,
    /// Shift θ of the virtual battery queue B = E + θ.
    pub theta: S,
}

/// Prices posted by the PME and its battery charge for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderAction<S> {
    pub p_s: S,
    pub p_b: S,
    /// Signed battery charge; negative values discharge.
    pub y: S,
}

/// HVAC consumption and the resulting injection power of one nanogrid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerAction<S> {
    pub e: S,
    /// Energy drawn from the PME; negative values are exports.
    pub tp: S,
}

/// Physical and virtual state at the start of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotState<S> {
    pub t: Vec<S>,
    pub h: Vec<S>,
    pub e_batt: S,
    pub b: S,
}

impl<S: Scalar> SlotState<S> {
    /// Builds a state whose virtual queues agree with the physical quantities.
    pub fn new(t: Vec<S>, e_batt: S, shifts: &[S], theta: S) -> Result<Self> {
        if t.len() != shifts.len() {
            return Err(Error::Config(format!("{} initial temperatures for {} queue shifts", t.len(), shifts.len())));
        }
        let h = t.iter().zip(shifts).map(|(&t, &g)| t + g).collect();
        Ok(SlotState { t, h, e_batt, b: e_batt + theta })
    }
}

/// Exogenous data of one nanogrid during one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NanogridSlot<S> {
    pub rp: S,
    pub d: S,
    pub t_out: S,
    /// Comfort target for the temperature reached at the end of the slot.
    pub t_opt: S,
}

/// Main-grid data seen by the PME during one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketSlot<S> {
    pub m_s: S,
    pub m_b: S,
    pub g_t: S,
}

/// Extremes of the exogenous series of one nanogrid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NanogridEnvelope<S> {
    pub t_out_min: S,
    pub t_out_max: S,
    pub t_opt_min: S,
    pub t_opt_max: S,
}

/// Extremes of the main-grid price series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceEnvelope<S> {
    pub m_s_max: S,
    pub m_b_min: S,
}

/// Validated exogenous time series for `n` nanogrids over `slots` slots.
///
/// Fields are private so that every instance has passed [`Scenario::new`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario<S> {
    n: usize,
    rp: Vec<Vec<S>>,
    d: Vec<Vec<S>>,
    t_out: Vec<Vec<S>>,
    t_opt: Vec<Vec<S>>,
    m_s: Vec<S>,
    m_b: Vec<S>,
    g_t: Vec<S>,
}

/// Raw column data used to build a [`Scenario`]; per-nanogrid series are indexed `[slot][nanogrid]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioData<S> {
    pub n: usize,
    pub rp: Vec<Vec<S>>,
    pub d: Vec<Vec<S>>,
    pub t_out: Vec<Vec<S>>,
    pub t_opt: Vec<Vec<S>>,
    pub m_s: Vec<S>,
    pub m_b: Vec<S>,
    pub g_t: Vec<S>,
}

impl<S: Scalar> Scenario<S> {
    pub fn new(data: ScenarioData<S>) -> Result<Self> {
        let slots = data.m_s.len();
        if slots == 0 {
            return Err(Error::Scenario("scenario has no slots".into()));
        }
        for (name, len) in [
            ("m_b", data.m_b.len()),
            ("g_t", data.g_t.len()),
            ("rp", data.rp.len()),
            ("d", data.d.len()),
            ("t_out", data.t_out.len()),
            ("t_opt", data.t_opt.len()),
        ] {
            if len != slots {
                return Err(Error::Scenario(format!("series {name} has {len} slots, expected {slots}")));
            }
        }
        for k in 0..slots {
            for (name, row) in
                [("rp", &data.rp[k]), ("d", &data.d[k]), ("t_out", &data.t_out[k]), ("t_opt", &data.t_opt[k])]
            {
                if row.len() != data.n {
                    return Err(Error::Scenario(format!(
                        "series {name} has {} nanogrids at slot {k}, expected {}",
                        row.len(),
                        data.n
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Scenario(format!("non-finite {name} at slot {k}")));
                }
            }
            for i in 0..data.n {
                if data.rp[k][i] < S::zero() {
                    return Err(Error::Scenario(format!("negative rp at slot {k}, nanogrid {i}")));
                }
                if data.d[k][i] < S::zero() {
                    return Err(Error::Scenario(format!("negative d at slot {k}, nanogrid {i}")));
                }
            }
            let (ms, mb, g) = (data.m_s[k], data.m_b[k], data.g_t[k]);
            if !(ms.is_finite() && mb.is_finite() && g.is_finite()) {
                return Err(Error::Scenario(format!("non-finite market data at slot {k}")));
            }
            if mb > ms {
                return Err(Error::Scenario(format!("m_b > m_s at slot {k} ({mb} > {ms}): empty price band")));
            }
        }
        Ok(Scenario {
            n: data.n,
            rp: data.rp,
            d: data.d,
            t_out: data.t_out,
            t_opt: data.t_opt,
            m_s: data.m_s,
            m_b: data.m_b,
            g_t: data.g_t,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> usize {
        self.m_s.len()
    }

    pub fn nanogrid_slot(&self, k: usize, i: usize) -> NanogridSlot<S> {
        NanogridSlot { rp: self.rp[k][i], d: self.d[k][i], t_out: self.t_out[k][i], t_opt: self.t_opt[k][i] }
    }

    pub fn nanogrid_slots(&self, k: usize) -> Vec<NanogridSlot<S>> {
        (0..self.n).map(|i| self.nanogrid_slot(k, i)).collect()
    }

    pub fn market(&self, k: usize) -> MarketSlot<S> {
        MarketSlot { m_s: self.m_s[k], m_b: self.m_b[k], g_t: self.g_t[k] }
    }

    pub fn rp(&self) -> &[Vec<S>] {
        &self.rp
    }

    pub fn d(&self) -> &[Vec<S>] {
        &self.d
    }

    pub fn t_out(&self) -> &[Vec<S>] {
        &self.t_out
    }

    pub fn t_opt(&self) -> &[Vec<S>] {
        &self.t_opt
    }

    pub fn m_s(&self) -> &[S] {
        &self.m_s
    }

    pub fn m_b(&self) -> &[S] {
        &self.m_b
    }

    pub fn g_t(&self) -> &[S] {
        &self.g_t
    }

    /// Copies the series back into editable column form.
    pub fn to_data(&self) -> ScenarioData<S> {
        ScenarioData {
            n: self.n,
            rp: self.rp.clone(),
            d: self.d.clone(),
            t_out: self.t_out.clone(),
            t_opt: self.t_opt.clone(),
            m_s: self.m_s.clone(),
            m_b: self.m_b.clone(),
            g_t: self.g_t.clone(),
        }
    }

    /// Keeps only the first `n` nanogrids.
    pub fn truncate_nanogrids(&self, n: usize) -> Result<Self> {
        if n > self.n {
            return Err(Error::Config(format!("cannot keep {n} nanogrids out of {}", self.n)));
        }
        let cut = |m: &[Vec<S>]| m.iter().map(|row| row[..n].to_vec()).collect();
        Scenario::new(ScenarioData {
            n,
            rp: cut(&self.rp),
            d: cut(&self.d),
            t_out: cut(&self.t_out),
            t_opt: cut(&self.t_opt),
            ..self.to_data()
        })
    }

    pub fn nanogrid_envelope(&self, i: usize) -> NanogridEnvelope<S> {
        let (mut lo, mut hi) = (S::infinity(), S::neg_infinity());
        let (mut olo, mut ohi) = (S::infinity(), S::neg_infinity());
        for k in 0..self.slots() {
            lo = lo.min(self.t_out[k][i]);
            hi = hi.max(self.t_out[k][i]);
            olo = olo.min(self.t_opt[k][i]);
            ohi = ohi.max(self.t_opt[k][i]);
        }
        NanogridEnvelope { t_out_min: lo, t_out_max: hi, t_opt_min: olo, t_opt_max: ohi }
    }

    pub fn price_envelope(&self) -> PriceEnvelope<S> {
        PriceEnvelope {
            m_s_max: self.m_s.iter().copied().fold(S::neg_infinity(), S::max),
            m_b_min: self.m_b.iter().copied().fold(S::infinity(), S::min),
        }
    }

    /// Narrowest gap `m_s - m_b` over all slots.
    pub fn min_band_width(&self) -> S {
        self.m_s.iter().zip(&self.m_b).map(|(&s, &b)| s - b).fold(S::infinity(), S::min)
    }

    /// True when the injection limit never cuts the HVAC range `[0, e_max]` of
    /// nanogrid `i`, which the comfort guarantee relies on.
    pub fn injection_headroom(&self, i: usize, params: &NanogridParams<S>) -> bool {
        (0..self.slots()).all(|k| {
            let net = self.d[k][i] - self.rp[k][i];
            net + params.e_max <= params.l_max && -net <= params.l_max
        })
    }

    /// Verifies parameter validity and the comfort assumptions for every nanogrid.
    pub fn bind(&self, nanogrids: &[NanogridParams<S>], pme: &PmeParams<S>) -> Result<()> {
        if nanogrids.len() != self.n {
            return Err(Error::Config(format!(
                "{} nanogrid parameter sets for a scenario with {} nanogrids",
                nanogrids.len(),
                self.n
            )));
        }
        pme.validate()?;
        for (i, p) in nanogrids.iter().enumerate() {
            p.validate()?;
            p.check_assumptions(&self.nanogrid_envelope(i), i)?;
        }
        Ok(())
    }
}

/// One-slot indoor temperature update `εT + (1-ε)(T_out ± ηe)`.
pub fn thermal_step<S: Scalar>(t: S, t_out: S, e: S, params: &NanogridParams<S>, mode: HvacMode) -> S {
    let eps = params.epsilon;
    eps * t + (S::one() - eps) * (t_out + mode.sign::<S>() * params.eta * e)
}

/// Payment of a nanogrid to the PME for injection `tp` (negative when it sells).
pub fn bilinear_trade_cost<S: Scalar>(tp: S, p_s: S, p_b: S) -> S {
    p_s * tp.pos() + p_b * tp.neg_part()
}

/// Amortized battery cost `½ c_b y²`.
pub fn battery_cost<S: Scalar>(y: S, c_b: S) -> S {
    S::half() * c_b * y * y
}

/// Cost of settling the signed residual with the main grid: buys at `m_s`, sells at `m_b`.
pub fn grid_settlement<S: Scalar>(residual: S, m_s: S, m_b: S) -> S {
    m_s * residual.pos() + m_b * residual.neg_part()
}

/// Energy the PME must buy from (positive) or sell to (negative) the main grid.
pub fn grid_residual<S: Scalar>(tps: &[S], g_t: S, y: S) -> S {
    tps.iter().copied().sum::<S>() - g_t + y
}

/// Discomfort `γ (T - T_opt)²`.
pub fn discomfort_cost<S: Scalar>(t: S, t_opt: S, gamma: S) -> S {
    let dev = t - t_opt;
    gamma * dev * dev
}

/// PME trading profit over one slot.
pub fn pme_profit<S: Scalar>(action: &LeaderAction<S>, tps: &[S], market: &MarketSlot<S>, c_b: S) -> S {
    let revenue: S = tps.iter().map(|&tp| bilinear_trade_cost(tp, action.p_s, action.p_b)).sum();
    let residual = grid_residual(tps, market.g_t, action.y);
    revenue - battery_cost(action.y, c_b) - grid_settlement(residual, market.m_s, market.m_b)
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.to_string()))
    }
}
