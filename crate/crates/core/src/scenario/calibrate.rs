use serde::{Deserialize, Serialize};

use super::data::{DaySelection, ScenarioData};
use super::run::{run_scenario, RunSettings};
use crate::dispatch::{DispatchOptions, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::{FeederModel, VOLTAGE_RISE_LIMIT};

/// First day-of-year index of the default calibration week (mid June).
pub const CALIBRATION_WEEK_START: usize = 166;
/// Seed of the synthetic year the default limit was calibrated on.
pub const CALIBRATION_SEED: u64 = 2013;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackflowOptions {
    /// PV penetration the limit must hold at. The default sits just above
    /// the level the feeder hosts without any control.
    pub penetration: f64,
    /// Required headroom below the rise limit, in percentage points.
    pub margin: f64,
    /// Bisection stops when the bracket is this narrow, kW.
    pub tolerance_kw: f64,
    /// Loosest limit tried, kW (negative).
    pub loosest_kw: f64,
    /// Tightest limit tried, kW (negative).
    pub tightest_kw: f64,
    pub dispatch: DispatchOptions,
    pub solver: SolverOptions,
}

impl Default for BackflowOptions {
    fn default() -> Self {
        BackflowOptions {
            penetration: 0.45,
            margin: 0.1,
            tolerance_kw: 0.5,
            loosest_kw: -400.0,
            tightest_kw: -1.0,
            dispatch: DispatchOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BackflowCalibration {
    pub p_min: f64,
    /// Highest rise over the calibration days at `p_min`, percent.
    pub peak_rise: f64,
    pub shed_kwh: f64,
    /// The loosest limit already passed.
    pub capped: bool,
    pub evaluations: usize,
}

/// The default calibration week on a synthetic year.
pub fn calibration_week(feeder: FeederModel, seed: u64) -> ScenarioData {
    ScenarioData::synthetic(
        feeder,
        seed,
        DaySelection::Window {
            start: CALIBRATION_WEEK_START,
            len: 7,
        },
    )
}

/// Loosest backflow limit at which the dispatched calibration days keep
/// every minute at least `margin` below the rise limit.
///
/// Bisects between `loosest_kw` and `tightest_kw`, assuming a tighter
/// limit never raises the peak rise.
pub fn calibrate_backflow_limit(days: &ScenarioData, opts: &BackflowOptions) -> Result<BackflowCalibration> {
    if !(opts.loosest_kw < opts.tightest_kw && opts.tightest_kw < 0.0) {
        return Err(Error::InvalidInput(format!(
            "need loosest_kw ({}) < tightest_kw ({}) < 0",
            opts.loosest_kw, opts.tightest_kw
        )));
    }
    if !(opts.tolerance_kw > 0.0) || !(opts.margin >= 0.0) {
        return Err(Error::InvalidInput(
            "tolerance_kw must be positive and margin non-negative".into(),
        ));
    }
    let limit = VOLTAGE_RISE_LIMIT - opts.margin;
    let settings = RunSettings {
        penetration: opts.penetration,
        dispatch: opts.dispatch.clone(),
        solver: opts.solver.clone(),
        ..Default::default()
    };
    let mut evaluations = 0;
    let mut eval = |p_min: f64| -> Result<(f64, f64)> {
        evaluations += 1;
        let mut s = days.clone();
        s.feeder = days.feeder.with_limits(p_min, days.feeder.p_max)?;
        let (res, _) = run_scenario(&s, &settings)?;
        log::debug!("p_min {p_min:.2}: peak rise {:.4} %", res.peak_rise);
        Ok((res.peak_rise, res.report.shed_energy))
    };
    let (rise, shed) = eval(opts.loosest_kw)?;
    if rise <= limit {
        return Ok(BackflowCalibration {
            p_min: opts.loosest_kw,
            peak_rise: rise,
            shed_kwh: shed,
            capped: true,
            evaluations,
        });
    }
    let (mut best_rise, mut best_shed) = eval(opts.tightest_kw)?;
    if best_rise > limit {
        return Err(Error::Infeasible(format!(
            "even a {} kW limit leaves a {best_rise:.3} % rise",
            opts.tightest_kw
        )));
    }
    let (mut lo, mut hi) = (opts.loosest_kw, opts.tightest_kw);
    while hi - lo > opts.tolerance_kw {
        let mid = 0.5 * (lo + hi);
        let (rise, shed) = eval(mid)?;
        if rise <= limit {
            hi = mid;
            best_rise = rise;
            best_shed = shed;
        } else {
            lo = mid;
        }
    }
    Ok(BackflowCalibration {
        p_min: hi,
        peak_rise: best_rise,
        shed_kwh: best_shed,
        capped: false,
        evaluations,
    })
}
