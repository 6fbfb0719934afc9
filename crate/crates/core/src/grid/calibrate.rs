//! Default double-feeder and the routines that calibrate its impedances.
//!
//! The default feeder is two radial cables of ten load buses each, fed
//! from one busbar. Cable lengths give the relative impedance profile; a
//! single scale factor is then tuned so that uniform PV of
//! [`DACHCZ_KWP_PER_HOUSEHOLD`] at zero load lifts the weakest bus by
//! exactly the 3 % rise limit. The stored [`DEFAULT_IMPEDANCE_SCALE`] is
//! the output of [`calibrate_impedance_scale`] on the base layout.

use serde::Serialize;

use super::flow::{max_voltage_rise, solve_power_flow, BusLoad};
use super::model::{Bus, FeederModel, Line};
use super::sim::VOLTAGE_RISE_LIMIT;
use crate::error::{Error, Result};

pub const HOUSEHOLDS_PER_BUS: u32 = 10;
pub const LOAD_BUSES_PER_FEEDER: usize = 10;
pub const DACHCZ_KWP_PER_HOUSEHOLD: f64 = 0.865;
/// Yearly peak of the double feeder, which also sets the forward limit.
pub const PEAK_LOAD_KVA: f64 = 220.0;
pub const PEAK_POWER_FACTOR: f64 = 0.95;
pub const MIN_PEAK_VOLTAGE: f64 = 0.96;

const CABLE_R_OHM_PER_KM: f64 = 0.206;
const CABLE_X_OHM_PER_KM: f64 = 0.080;
const FEEDER_A_M: [f64; LOAD_BUSES_PER_FEEDER] = [150.0, 45.0, 40.0, 45.0, 40.0, 40.0, 45.0, 40.0, 40.0, 35.0];
const FEEDER_B_M: [f64; LOAD_BUSES_PER_FEEDER] = [120.0, 40.0, 40.0, 35.0, 40.0, 40.0, 35.0, 40.0, 35.0, 35.0];

/// Output of [`calibrate_impedance_scale`] for the base cable layout.
pub const DEFAULT_IMPEDANCE_SCALE: f64 = 0.823_203_184_183_358_9;
/// Output of `scenario::calibrate_backflow_limit` with its default options
/// on the calibration week of the seed-2013 synthetic year.
pub const DEFAULT_P_MIN_KW: f64 = -165.041_992_187_5;

/// Uncalibrated layout: cable lengths times nominal per-km impedance.
pub fn base_layout() -> FeederModel {
    let mut buses = vec![Bus::busbar()];
    let mut lines = Vec::new();
    for lengths in [FEEDER_A_M, FEEDER_B_M] {
        let mut upstream = 0;
        for len in lengths {
            let id = buses.len();
            buses.push(Bus::load(id, HOUSEHOLDS_PER_BUS));
            lines.push(Line {
                from_bus: upstream,
                to_bus: id,
                resistance_ohm: CABLE_R_OHM_PER_KM * len / 1000.0,
                reactance_ohm: CABLE_X_OHM_PER_KM * len / 1000.0,
                ampacity_a: Some(275.0),
            });
            upstream = id;
        }
    }
    FeederModel::new(buses, lines, 1.01, 400.0, 630.0, PEAK_LOAD_KVA, DEFAULT_P_MIN_KW)
        .expect("base layout is a valid tree")
}

/// The calibrated 20-bus default feeder.
pub fn default_feeder() -> FeederModel {
    base_layout()
        .with_impedance_scale(DEFAULT_IMPEDANCE_SCALE)
        .expect("scaled layout stays valid")
}

/// Zero load, every PV bus injecting `kwp_per_household` per household.
pub fn dachcz_loads(model: &FeederModel, kwp_per_household: f64) -> Vec<BusLoad> {
    model
        .buses()
        .iter()
        .map(|b| {
            if b.has_pv {
                BusLoad::new(-kwp_per_household * b.households as f64, 0.0)
            } else {
                BusLoad::default()
            }
        })
        .collect()
}

/// The yearly peak spread evenly over households.
pub fn peak_loads(model: &FeederModel, peak_kva: f64, power_factor: f64) -> Vec<BusLoad> {
    let per_household = peak_kva / model.total_households() as f64;
    let q_ratio = (1.0 - power_factor * power_factor).sqrt();
    model
        .buses()
        .iter()
        .map(|b| {
            let s = per_household * b.households as f64;
            BusLoad::new(s * power_factor, s * q_ratio)
        })
        .collect()
}

pub fn dachcz_rise(model: &FeederModel, kwp_per_household: f64) -> Result<f64> {
    let sol = solve_power_flow(model, &dachcz_loads(model, kwp_per_household))?;
    Ok(max_voltage_rise(&sol, model))
}

pub fn peak_min_voltage(model: &FeederModel) -> Result<f64> {
    let sol = solve_power_flow(model, &peak_loads(model, PEAK_LOAD_KVA, PEAK_POWER_FACTOR))?;
    Ok(sol.min_voltage())
}

/// Bisection on a common impedance multiplier so the zero-load PV case
/// reaches `target_rise` percent.
pub fn calibrate_impedance_scale(layout: &FeederModel, kwp_per_household: f64, target_rise: f64) -> Result<f64> {
    let rise_at = |scale: f64| -> Result<f64> { dachcz_rise(&layout.with_impedance_scale(scale)?, kwp_per_household) };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while rise_at(hi)? < target_rise {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::InvalidFeeder("cannot reach the target rise".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rise_at(mid)? < target_rise {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest uniform PV per household at zero load that keeps the rise
/// within the limit.
pub fn dachcz_kwp_per_household(model: &FeederModel, tolerance: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    while dachcz_rise(model, hi)? <= VOLTAGE_RISE_LIMIT {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if dachcz_rise(model, mid)? <= VOLTAGE_RISE_LIMIT {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Serialize)]
pub struct FeederCalibrationReport {
    pub impedance_scale: f64,
    pub stored_scale: f64,
    pub dachcz_rise_percent: f64,
    pub peak_min_voltage: f64,
    pub peak_ok: bool,
}

pub fn feeder_calibration_report() -> Result<FeederCalibrationReport> {
    let scale = calibrate_impedance_scale(&base_layout(), DACHCZ_KWP_PER_HOUSEHOLD, VOLTAGE_RISE_LIMIT)?;
    let model = default_feeder();
    let peak = peak_min_voltage(&model)?;
    Ok(FeederCalibrationReport {
        impedance_scale: scale,
        stored_scale: DEFAULT_IMPEDANCE_SCALE,
        dachcz_rise_percent: dachcz_rise(&model, DACHCZ_KWP_PER_HOUSEHOLD)?,
        peak_min_voltage: peak,
        peak_ok: peak >= MIN_PEAK_VOLTAGE,
    })
}
