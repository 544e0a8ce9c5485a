//! Scenario files and the seeded synthetic scenario generator.
//!
//! File layout: one header row, one row per slot. Columns `slot, m_s, m_b, g_t`
//! followed by `rp_i, d_i, t_out_i, t_opt_i` for every nanogrid `i = 0..n`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{NanogridParams, PmeParams, Scenario, ScenarioData};
use crate::error::{Error, Result};
use crate::num::Scalar;

const SLOT_COLUMNS: [&str; 4] = ["slot", "m_s", "m_b", "g_t"];
const NANOGRID_COLUMNS: [&str; 4] = ["rp", "d", "t_out", "t_opt"];

/// Header row for a scenario with `n` nanogrids.
pub fn expected_headers(n: usize) -> Vec<String> {
    let mut h: Vec<String> = SLOT_COLUMNS.iter().map(|s| s.to_string()).collect();
    for i in 0..n {
        h.extend(NANOGRID_COLUMNS.iter().map(|c| format!("{c}_{i}")));
    }
    h
}

/// Reads and validates a scenario.
pub fn load_scenario<S: Scalar, R: Read>(reader: R) -> Result<Scenario<S>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 1, column: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let n = headers.iter().filter(|h| h.starts_with("rp_")).count();
    let expected = expected_headers(n);
    let mut index = Vec::with_capacity(expected.len());
    for name in &expected {
        match headers.iter().position(|h| h == name) {
            Some(p) => index.push(p),
            None => {
                return Err(Error::Parse {
                    row: 1,
                    column: headers.len() + 1,
                    message: format!("missing column `{name}`; expected headers: {}", expected.join(",")),
                })
            }
        }
    }
    if headers.len() != expected.len() {
        let extra: Vec<&String> = headers.iter().filter(|h| !expected.contains(h)).collect();
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: format!("unexpected columns {extra:?}; expected headers: {}", expected.join(",")),
        });
    }

    let mut data = ScenarioData { n, ..Default::default() };
    for (r, record) in rdr.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| Error::Parse { row, column: 1, message: e.to_string() })?;
        let field = |j: usize| -> Result<S> {
            let col = index[j];
            let raw = record.get(col).ok_or_else(|| Error::Parse {
                row,
                column: col + 1,
                message: "missing field".into(),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("`{raw}` is not a number"),
            })?;
            S::from_f64(v).ok_or_else(|| Error::Parse {
                row,
                column: col + 1,
                message: format!("`{raw}` out of range"),
            })
        };
        let slot = field(0)?;
        if slot != S::lit(r as f64) {
            return Err(Error::Parse {
                row,
                column: index[0] + 1,
                message: format!("slot index {slot}, expected {r}"),
            });
        }
        data.m_s.push(field(1)?);
        data.m_b.push(field(2)?);
        data.g_t.push(field(3)?);
        let mut cols: [Vec<S>; 4] = Default::default();
        for i in 0..n {
            for (c, col) in cols.iter_mut().enumerate() {
                col.push(field(4 + 4 * i + c)?);
            }
        }
        let [rp, d, t_out, t_opt] = cols;
        data.rp.push(rp);
        data.d.push(d);
        data.t_out.push(t_out);
        data.t_opt.push(t_opt);
    }
    Scenario::new(data)
}

pub fn load_scenario_file<S: Scalar>(path: &Path) -> Result<Scenario<S>> {
    let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    load_scenario(f)
}

/// Writes a scenario; numbers use the shortest representation that reads back identically.
pub fn save_scenario<S: Scalar, W: Write>(scenario: &Scenario<S>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(expected_headers(scenario.n())).map_err(io)?;
    for k in 0..scenario.slots() {
        let mut row = vec![
            k.to_string(),
            scenario.m_s()[k].to_string(),
            scenario.m_b()[k].to_string(),
            scenario.g_t()[k].to_string(),
        ];
        for i in 0..scenario.n() {
            let s = scenario.nanogrid_slot(k, i);
            row.extend([s.rp, s.d, s.t_out, s.t_opt].iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_scenario_file<S: Scalar>(scenario: &Scenario<S>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    save_scenario(scenario, f)
}

/// Parameters of the synthetic day profiles. All profiles repeat every 24 slots.
///
/// * outdoor temperature: `t_out_mean + t_out_swing·sin(2π(h-9)/24)` plus a per-house
///   offset and uniform noise, clipped to `t_out_clip`;
/// * comfort target: per-house base in `t_opt_base` plus `t_opt_swing·sin(2π(h-10)/24)`;
/// * base load: morning (8h) and evening (19h) Gaussian peaks over a floor;
/// * renewables: a solar bell between 6h and 18h scaled by a per-house capacity, plus wind noise;
/// * main-grid selling price: off-peak, shoulder (7h–16h) and peak (17h–21h) levels with noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub slots: usize,
    pub seed: u64,
    pub g_t_range: (f64, f64),
    pub epsilon_range: (f64, f64),
    pub m_b: f64,
    /// Off-peak, shoulder and peak selling prices.
    pub m_s_levels: (f64, f64, f64),
    pub m_s_noise: f64,
    pub t_out_mean: f64,
    pub t_out_swing: f64,
    pub t_out_offset: f64,
    pub t_out_noise: f64,
    pub t_out_clip: (f64, f64),
    pub t_opt_base: (f64, f64),
    pub t_opt_swing: f64,
    pub load_floor: f64,
    pub load_morning: f64,
    pub load_evening: f64,
    pub load_noise: f64,
    pub pv_capacity: (f64, f64),
    pub wind_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 5,
            slots: 24,
            seed: 2024,
            g_t_range: (-15.0, 25.0),
            epsilon_range: (0.93, 0.98),
            m_b: 3.0,
            m_s_levels: (6.0, 9.0, 14.0),
            m_s_noise: 0.5,
            t_out_mean: 50.0,
            t_out_swing: 8.0,
            t_out_offset: 3.0,
            t_out_noise: 1.5,
            t_out_clip: (20.0, 76.0),
            t_opt_base: (70.0, 72.0),
            t_opt_swing: 1.0,
            load_floor: 0.6,
            load_morning: 0.8,
            load_evening: 1.2,
            load_noise: 0.2,
            pv_capacity: (2.0, 4.0),
            wind_noise: 0.4,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, (a, b): (f64, f64)| {
            if a <= b && a.is_finite() && b.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("range {name} = ({a}, {b}) is empty")))
            }
        };
        ordered("g_t_range", self.g_t_range)?;
        ordered("epsilon_range", self.epsilon_range)?;
        ordered("t_out_clip", self.t_out_clip)?;
        ordered("t_opt_base", self.t_opt_base)?;
        ordered("pv_capacity", self.pv_capacity)?;
        if self.slots == 0 {
            return Err(Error::Config("slots must be positive".into()));
        }
        if !(self.epsilon_range.0 > 0.0 && self.epsilon_range.1 < 1.0) {
            return Err(Error::Config("epsilon_range must lie inside (0, 1)".into()));
        }
        let (off, shoulder, peak) = self.m_s_levels;
        if off.min(shoulder).min(peak) - self.m_s_noise <= self.m_b {
            return Err(Error::Config("selling price levels must stay above m_b".into()));
        }
        Ok(())
    }
}

/// A generated scenario together with the parameters it was drawn for.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic<S> {
    pub scenario: Scenario<S>,
    pub nanogrids: Vec<NanogridParams<S>>,
    pub pme: PmeParams<S>,
}

fn gauss_bump(h: f64, center: f64, width2: f64) -> f64 {
    (-(h - center).powi(2) / width2).exp()
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Deterministic scenario drawn from `spec.seed`, with ε drawn per nanogrid.
pub fn generate_synthetic<S: Scalar>(spec: &SyntheticSpec) -> Result<Synthetic<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;

    let eps: Vec<f64> = (0..n).map(|_| sample(&mut rng, spec.epsilon_range)).collect();
    let offset: Vec<f64> = (0..n).map(|_| sample(&mut rng, (-spec.t_out_offset, spec.t_out_offset))).collect();
    let t_opt_base: Vec<f64> = (0..n).map(|_| sample(&mut rng, spec.t_opt_base)).collect();
    let load_scale: Vec<f64> = (0..n).map(|_| sample(&mut rng, (0.8, 1.2))).collect();
    let pv: Vec<f64> = (0..n).map(|_| sample(&mut rng, spec.pv_capacity)).collect();

    let mut data = ScenarioData { n, ..Default::default() };
    for k in 0..spec.slots {
        let h = (k % 24) as f64;
        let (off, shoulder, peak) = spec.m_s_levels;
        let level = match k % 24 {
            17..=21 => peak,
            7..=16 => shoulder,
            _ => off,
        };
        data.m_s.push(S::lit(level + sample(&mut rng, (-spec.m_s_noise, spec.m_s_noise))));
        data.m_b.push(S::lit(spec.m_b));
        data.g_t.push(S::lit(sample(&mut rng, spec.g_t_range)));

        let outdoor = spec.t_out_mean + spec.t_out_swing * (2.0 * PI * (h - 9.0) / 24.0).sin();
        let target = spec.t_opt_swing * (2.0 * PI * (h - 10.0) / 24.0).sin();
        let shape = spec.load_floor
            + spec.load_morning * gauss_bump(h, 8.0, 4.5)
            + spec.load_evening * gauss_bump(h, 19.0, 6.0);
        let sun = (PI * (h - 6.0) / 12.0).sin().max(0.0);
        let mut row = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for i in 0..n {
            let t_out = (outdoor + offset[i] + sample(&mut rng, (-spec.t_out_noise, spec.t_out_noise)))
                .clamp(spec.t_out_clip.0, spec.t_out_clip.1);
            let d = load_scale[i] * shape + sample(&mut rng, (0.0, spec.load_noise));
            let rp = pv[i] * sun * sample(&mut rng, (0.8, 1.0)) + sample(&mut rng, (0.0, spec.wind_noise));
            row[0].push(S::lit(rp));
            row[1].push(S::lit(d));
            row[2].push(S::lit(t_out));
            row[3].push(S::lit(t_opt_base[i] + target));
        }
        let [rp, d, t_out, t_opt] = row;
        data.rp.push(rp);
        data.d.push(d);
        data.t_out.push(t_out);
        data.t_opt.push(t_opt);
    }
    let scenario = Scenario::new(data)?;
    let nanogrids: Vec<NanogridParams<S>> = eps.iter().map(|&e| NanogridParams::reference(S::lit(e))).collect();
    let pme = PmeParams::reference();
    scenario.bind(&nanogrids, &pme)?;
    Ok(Synthetic { scenario, nanogrids, pme })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_slot() -> Scenario<f64> {
        Scenario::new(ScenarioData {
            n: 1,
            rp: vec![vec![0.1 + 0.2]],
            d: vec![vec![1.0 / 3.0]],
            t_out: vec![vec![48.123456789012345]],
            t_opt: vec![vec![71.0]],
            m_s: vec![9.7],
            m_b: vec![3.0],
            g_t: vec![-12.5e-3],
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let s = one_slot();
        let mut buf = Vec::new();
        save_scenario(&s, &mut buf).unwrap();
        let back: Scenario<f64> = load_scenario(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        let mut again = Vec::new();
        save_scenario(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn inverted_band_names_slot() {
        let text = "slot,m_s,m_b,g_t,rp_0,d_0,t_out_0,t_opt_0\n0,9,3,0,1,1,50,70\n1,2,3,0,1,1,50,70\n";
        let err = load_scenario::<f64, _>(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("m_b > m_s at slot 1"), "{err}");
    }

    #[test]
    fn missing_column_lists_headers() {
        let text = "slot,m_s,m_b,g_t,rp_0,d_0,t_out_0\n0,9,3,0,1,1,50\n";
        let err = load_scenario::<f64, _>(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t_opt_0") && msg.contains("slot,m_s,m_b,g_t"), "{msg}");
    }

    #[test]
    fn bad_number_reports_position() {
        let text = "slot,m_s,m_b,g_t,rp_0,d_0,t_out_0,t_opt_0\n0,9,3,x,1,1,50,70\n";
        match load_scenario::<f64, _>(text.as_bytes()) {
            Err(Error::Parse { row: 2, column: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generator_is_deterministic_and_in_range() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic::<f64>(&spec).unwrap();
        let b = generate_synthetic::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.scenario.g_t().iter().all(|&g| (-15.0..=25.0).contains(&g)));
        for i in 0..spec.n {
            assert!(a.scenario.nanogrid_envelope(i).t_out_max <= 77.0);
            assert!(a.scenario.injection_headroom(i, &a.nanogrids[i]));
            assert!((0.93..=0.98).contains(&a.nanogrids[i].epsilon));
        }
        let c = generate_synthetic::<f64>(&SyntheticSpec { seed: 9, ..spec }).unwrap();
        assert_ne!(a.scenario, c.scenario);
    }

    #[test]
    fn generator_reports_broken_assumption() {
        let spec = SyntheticSpec { t_out_mean: 85.0, t_out_clip: (20.0, 95.0), ..Default::default() };
        assert!(matches!(generate_synthetic::<f64>(&spec), Err(Error::Assumption { label: 'a', .. })));
    }
}
