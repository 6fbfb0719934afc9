use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::series::{TimeSeries, MINUTES_PER_DAY};
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const DEFAULT_CAPACITY_FACTOR: f64 = 0.0983;
pub const DAYS_PER_YEAR: usize = 365;
pub const DEFAULT_YEAR: i32 = 2013;

const LATITUDE_DEG: f64 = 47.4;
const LONGITUDE_DEG: f64 = 8.5;
const TILT_DEG: f64 = 30.0;
const SYSTEM_DERATE: f64 = 0.8;
/// Inverter limit in kW per kWp.
const INVERTER_LIMIT: f64 = 1.0;
/// Time a cloud edge needs to cross the feeder. The trace stands for all
/// plants together, so the sky factor is low-passed over this span.
const FEEDER_TRANSIT_MINUTES: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvPlant {
    pub id: usize,
    pub bus: usize,
    pub peak_power: f64,
    pub group: usize,
    pub rampable: bool,
}

impl PvPlant {
    pub fn new(id: usize, bus: usize, peak_power: f64) -> Result<Self> {
        if !(peak_power > 0.0) {
            return Err(Error::InvalidInput(format!(
                "PV plant {id}: peak power must be positive"
            )));
        }
        Ok(PvPlant {
            id,
            bus,
            peak_power,
            group: id,
            rampable: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sky {
    Clear,
    Broken,
    Overcast,
}

/// Synthetic minute-resolution PV output per kWp for a Swiss-like site.
///
/// Clear-sky output comes from sun geometry on a south-facing tilted
/// module; a daily weather type then modulates it: clear, broken cloud
/// (a two-state sun/shade Markov chain that produces minute-scale ramps)
/// or overcast. The sky factor is smoothed over the feeder transit time
/// of a cloud edge. The whole year is scaled once so that its mean output
/// equals the requested capacity factor.
#[derive(Debug, Clone)]
pub struct PvModel {
    seed: u64,
    pub capacity_factor: f64,
    scale: f64,
}

impl PvModel {
    pub fn new(seed: u64, capacity_factor: f64) -> Self {
        let mut model = PvModel {
            seed,
            capacity_factor,
            scale: 1.0,
        };
        let raw: f64 = (0..DAYS_PER_YEAR).map(|d| model.raw_day(d).iter().sum::<f64>()).sum();
        let target = capacity_factor * (DAYS_PER_YEAR * MINUTES_PER_DAY) as f64;
        model.scale = target / raw;
        // Clipping at the inverter limit removes a little energy; one
        // correction pass restores the yearly total.
        let clipped: f64 = (0..DAYS_PER_YEAR).map(|d| model.day(d).iter().sum::<f64>()).sum();
        model.scale *= target / clipped;
        model
    }

    /// Output per kWp for each minute (UTC) of day-of-year `day` (0-based).
    pub fn day(&self, day: usize) -> Vec<f64> {
        self.raw_day(day)
            .into_iter()
            .map(|p| (p * self.scale).min(INVERTER_LIMIT))
            .collect()
    }

    fn raw_day(&self, day: usize) -> Vec<f64> {
        let mut rng: ChaCha8Rng = rng_for(self.seed, &[0x5_0000, day as u64]);
        let summer = 0.5 * (1.0 + (2.0 * PI * (day as f64 - 171.0) / 365.0).cos());
        let p_clear = 0.05 + 0.27 * summer;
        let p_overcast = 0.62 - 0.30 * summer;
        let u: f64 = rng.random();
        let sky = if u < p_clear {
            Sky::Clear
        } else if u < p_clear + p_overcast {
            Sky::Overcast
        } else {
            Sky::Broken
        };
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let overcast_level = rng.random_range(0.06..0.3);
        let cloud_cover: f64 = rng.random_range(0.4..0.85);
        let mut shaded = rng.random_bool(cloud_cover);
        let mut slow = 0.0;
        let mut since_switch = 10u32;
        let mut smooth: Option<f64> = None;
        (0..MINUTES_PER_DAY)
            .map(|minute| {
                let clear = clear_sky(day, minute as f64 + 0.5);
                slow = 0.98 * slow + 0.2 * 0.02f64.sqrt() * noise.sample(&mut rng);
                let k = match sky {
                    Sky::Clear => 0.97 + 0.01 * slow,
                    Sky::Overcast => (overcast_level * (1.0 + slow)).clamp(0.05, 0.6),
                    Sky::Broken => {
                        // mean spell lengths ~ 6 min shaded, scaled by cover
                        let leave = if shaded {
                            1.0 / (6.0 * (0.5 + cloud_cover))
                        } else {
                            cloud_cover / 8.0
                        };
                        if rng.random_bool(leave.min(1.0)) {
                            shaded = !shaded;
                            since_switch = 0;
                        } else {
                            since_switch += 1;
                        }
                        if shaded {
                            (0.3 + 0.08 * noise.sample(&mut rng)).clamp(0.1, 0.6)
                        } else if since_switch < 2 {
                            1.05
                        } else {
                            0.96
                        }
                    }
                };
                let k = match smooth {
                    Some(prev) => prev + (k - prev) / FEEDER_TRANSIT_MINUTES,
                    None => k,
                };
                smooth = Some(k);
                clear * k.max(0.0)
            })
            .collect()
    }
}

/// Clear-sky output per kWp at `minute` (UTC, fractional) of day `day`.
fn clear_sky(day: usize, minute: f64) -> f64 {
    let rad = PI / 180.0;
    let lat = LATITUDE_DEG * rad;
    let tilt = TILT_DEG * rad;
    let decl = 23.44 * rad * (2.0 * PI * (284.0 + day as f64 + 1.0) / 365.0).sin();
    let solar_hour = minute / 60.0 + LONGITUDE_DEG / 15.0;
    let omega = (solar_hour - 12.0) * 15.0 * rad;
    let sin_el = lat.sin() * decl.sin() + lat.cos() * decl.cos() * omega.cos();
    if sin_el <= 0.0 {
        return 0.0;
    }
    let el_deg = sin_el.asin() / rad;
    let air_mass = 1.0 / (sin_el + 0.50572 * (el_deg + 6.07995).powf(-1.6364));
    let dni = 1.353 * 0.7f64.powf(air_mass.powf(0.678));
    let cos_inc = (lat - tilt).sin() * decl.sin() + (lat - tilt).cos() * decl.cos() * omega.cos();
    let diffuse = 0.1 * dni * (1.0 + tilt.cos()) / 2.0;
    (dni * cos_inc.max(0.0) + diffuse) * SYSTEM_DERATE
}

/// A year of minute PV output for a plant of `peak_kwp`.
pub fn synth_pv_profile(peak_kwp: f64, capacity_factor: f64, seed: u64) -> Result<TimeSeries> {
    if !(peak_kwp > 0.0) || !(capacity_factor > 0.0 && capacity_factor < 1.0) {
        return Err(Error::InvalidInput(
            "need positive peak and a capacity factor in (0, 1)".into(),
        ));
    }
    let model = PvModel::new(seed, capacity_factor);
    let values = (0..DAYS_PER_YEAR)
        .flat_map(|d| model.day(d))
        .map(|p| p * peak_kwp)
        .collect();
    TimeSeries::new(year_start(DEFAULT_YEAR), 1, values)
}

pub(crate) fn year_start(year: i32) -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("valid year")
        .and_hms_opt(0, 0, 0)
        .expect("midnight")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yearly_energy_matches_capacity_factor() {
        let s = synth_pv_profile(1.0, DEFAULT_CAPACITY_FACTOR, 11).unwrap();
        let expected = 1.0 * 8760.0 * 0.0983;
        let energy = s.energy_kwh();
        assert!((energy - expected).abs() / expected < 0.01, "{energy} vs {expected}");
        assert_eq!(s.len(), 525_600);
    }

    #[test]
    fn dark_at_midnight_and_bounded() {
        let model = PvModel::new(5, DEFAULT_CAPACITY_FACTOR);
        for day in [0, 100, 171, 300] {
            let d = model.day(day);
            assert_eq!(d[0], 0.0);
            assert_eq!(d[MINUTES_PER_DAY - 1], 0.0);
            assert!(d.iter().all(|&p| (0.0..=INVERTER_LIMIT).contains(&p)));
        }
    }

    #[test]
    fn summer_beats_winter() {
        let model = PvModel::new(5, DEFAULT_CAPACITY_FACTOR);
        let season = |days: std::ops::Range<usize>| -> f64 { days.map(|d| model.day(d).iter().sum::<f64>()).sum() };
        assert!(season(150..200) > 2.0 * season(0..50));
    }

    #[test]
    fn deterministic() {
        assert_eq!(PvModel::new(9, 0.1).day(180), PvModel::new(9, 0.1).day(180));
        assert_ne!(PvModel::new(9, 0.1).day(180), PvModel::new(10, 0.1).day(180));
    }
}
