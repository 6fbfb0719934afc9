use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::draw::DAILY_HOT_WATER_KWH;
use super::pv::{year_start, DAYS_PER_YEAR, DEFAULT_YEAR};
use super::series::{TimeSeries, MINUTES_PER_DAY};
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Yearly electricity use per household including water heating, kWh.
///
/// 0.865 kWp per household at a 9.83 % capacity factor corresponds to a
/// 28.57 % penetration for exactly this consumption.
pub const HOUSEHOLD_CONSUMPTION_KWH: f64 = 2607.1;
pub const PASSIVE_KWH_PER_HOUSEHOLD: f64 = HOUSEHOLD_CONSUMPTION_KWH - DAILY_HOT_WATER_KWH * DAYS_PER_YEAR as f64;
pub const LOAD_POWER_FACTOR: f64 = 0.95;

/// Passive (non-water-heating) household demand for a group of
/// households, minute resolution.
///
/// A deterministic daily shape with a seasonal swing is multiplied by a
/// mean-one log-normal AR(1) factor whose spread shrinks with the number
/// of households. Each bus seeds its own stream. The year is normalized
/// to `households * annual_kwh` exactly.
#[derive(Debug, Clone)]
pub struct LoadModel {
    pub households: u32,
    seed: u64,
    scale: f64,
}

impl LoadModel {
    pub fn new(households: u32, seed: u64, annual_kwh_per_household: f64) -> Self {
        let mut model = LoadModel {
            households,
            seed,
            scale: 1.0,
        };
        let raw: f64 = (0..DAYS_PER_YEAR)
            .map(|d| model.day(d).iter().sum::<f64>())
            .sum::<f64>()
            / 60.0;
        model.scale = annual_kwh_per_household * households as f64 / raw;
        model
    }

    pub fn day(&self, day: usize) -> Vec<f64> {
        let mut rng: ChaCha8Rng = rng_for(self.seed, &[0x10ad, day as u64]);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let sigma = 0.9 / (self.households.max(1) as f64).sqrt();
        let phi = (-1.0f64 / 8.0).exp();
        let innovation = (1.0 - phi * phi).sqrt();
        let season = 1.0 + 0.22 * (2.0 * PI * (day as f64 - 10.0) / 365.0).cos();
        let weekend = matches!(day % 7, 5 | 6);
        let mut state: f64 = normal.sample(&mut rng);
        (0..MINUTES_PER_DAY)
            .map(|minute| {
                state = phi * state + innovation * normal.sample(&mut rng);
                let factor = (sigma * state - 0.5 * sigma * sigma).exp();
                let hour = (minute as f64 + 0.5) / 60.0;
                self.scale * self.households as f64 * season * daily_shape(hour, weekend) * factor
            })
            .collect()
    }
}

fn daily_shape(hour: f64, weekend: bool) -> f64 {
    let bump = |centre: f64, width: f64| (-0.5 * ((hour - centre) / width).powi(2)).exp();
    let midday = if weekend { 0.45 } else { 0.25 };
    0.45 + 0.35 * bump(7.3, 1.0) + midday * bump(12.5, 1.6) + 0.95 * bump(19.3, 1.9) + 0.3 * bump(24.0 + 19.3, 1.9)
        - 0.12 * bump(3.5, 1.5)
}

/// A year of minute demand for `households`.
pub fn synth_load_profile(households: u32, seed: u64) -> Result<TimeSeries> {
    if households == 0 {
        return Err(Error::InvalidInput("need at least one household".into()));
    }
    let model = LoadModel::new(households, seed, PASSIVE_KWH_PER_HOUSEHOLD);
    let values = (0..DAYS_PER_YEAR).flat_map(|d| model.day(d)).collect();
    TimeSeries::new(year_start(DEFAULT_YEAR), 1, values)
}
