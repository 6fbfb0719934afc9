use serde::Serialize;

use super::flow::{rise_percent, BusLoad, SweepWorkspace};
use super::model::FeederModel;
use crate::error::{Error, Result};

/// Voltage rise above the busbar that counts as a violation, in percent.
pub const VOLTAGE_RISE_LIMIT: f64 = 3.0;
const RISE_EPS: f64 = 1e-9;

/// One stretch of minute data for every bus, indexed `[bus][minute]`.
/// Bus 0 rows are normally all zero.
#[derive(Debug, Clone, Serialize)]
pub struct MinuteSeries {
    pub load_kw: Vec<Vec<f64>>,
    pub load_kvar: Vec<Vec<f64>>,
    pub pv_kw: Vec<Vec<f64>>,
    pub pv_kvar: Option<Vec<Vec<f64>>>,
}

impl MinuteSeries {
    pub fn zeros(n_buses: usize, minutes: usize) -> Self {
        MinuteSeries {
            load_kw: vec![vec![0.0; minutes]; n_buses],
            load_kvar: vec![vec![0.0; minutes]; n_buses],
            pv_kw: vec![vec![0.0; minutes]; n_buses],
            pv_kvar: None,
        }
    }

    pub fn minutes(&self) -> usize {
        self.load_kw.first().map_or(0, Vec::len)
    }

    pub fn n_buses(&self) -> usize {
        self.load_kw.len()
    }
}

/// Controllable additions to the minute data: water-heater power per
/// dispatch block and PV curtailment per minute, both `[bus][..]`.
#[derive(Debug, Clone, Serialize)]
pub struct BusSchedule {
    pub block_minutes: usize,
    pub ewh_kw: Vec<Vec<f64>>,
    pub curtail_kw: Option<Vec<Vec<f64>>>,
}

impl BusSchedule {
    pub fn idle(n_buses: usize, blocks: usize, block_minutes: usize) -> Self {
        BusSchedule {
            block_minutes,
            ewh_kw: vec![vec![0.0; blocks]; n_buses],
            curtail_kw: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MinuteSimResult {
    /// Largest rise above the busbar per minute, percent of nominal.
    pub max_rise: Vec<f64>,
    pub min_voltage: Vec<f64>,
    pub violation_minutes: usize,
    pub first_violation: Option<usize>,
    pub losses_kwh: f64,
    /// Energy drawn from the transformer (forward flow only).
    pub imported_kwh: f64,
    pub exported_kwh: f64,
    pub consumed_kwh: f64,
    pub pv_delivered_kwh: f64,
}

impl MinuteSimResult {
    pub fn peak_rise(&self) -> f64 {
        self.max_rise.iter().copied().fold(0.0, f64::max)
    }

    pub fn lowest_voltage(&self) -> f64 {
        self.min_voltage.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Solves one power flow per minute with the schedule applied and
/// collects voltage-rise violations and feeder losses.
pub fn simulate_minutes(model: &FeederModel, series: &MinuteSeries, schedule: &BusSchedule) -> Result<MinuteSimResult> {
    simulate_inner(model, series, schedule, false)
}

/// Same as [`simulate_minutes`] but returns as soon as one minute violates
/// the rise limit. Used by bisection searches.
pub fn first_violation(model: &FeederModel, series: &MinuteSeries, schedule: &BusSchedule) -> Result<Option<usize>> {
    Ok(simulate_inner(model, series, schedule, true)?.first_violation)
}

fn simulate_inner(
    model: &FeederModel,
    series: &MinuteSeries,
    schedule: &BusSchedule,
    stop_early: bool,
) -> Result<MinuteSimResult> {
    let n = model.n_buses();
    let minutes = series.minutes();
    if series.n_buses() != n || schedule.ewh_kw.len() != n {
        return Err(Error::InvalidInput(format!(
            "minute series covers {} buses and schedule {}, feeder has {n}",
            series.n_buses(),
            schedule.ewh_kw.len()
        )));
    }
    let blocks_needed = minutes.div_ceil(schedule.block_minutes.max(1));
    if schedule.ewh_kw.iter().any(|row| row.len() < blocks_needed) {
        return Err(Error::InvalidInput(format!(
            "schedule must cover {blocks_needed} blocks of {} minutes",
            schedule.block_minutes
        )));
    }
    if let Some(curtail) = &schedule.curtail_kw {
        if curtail.len() != n || curtail.iter().any(|row| row.len() < minutes) {
            return Err(Error::InvalidInput(
                "curtailment must cover every bus and minute".into(),
            ));
        }
    }

    let mut ws = SweepWorkspace::new(model);
    let mut loads = vec![BusLoad::default(); n];
    let mut out = MinuteSimResult {
        max_rise: Vec::with_capacity(minutes),
        min_voltage: Vec::with_capacity(minutes),
        ..Default::default()
    };
    for minute in 0..minutes {
        let block = minute / schedule.block_minutes;
        let mut consumed = 0.0;
        let mut pv_total = 0.0;
        for bus in 0..n {
            let curtail = schedule.curtail_kw.as_ref().map_or(0.0, |c| c[bus][minute]);
            let pv = (series.pv_kw[bus][minute] - curtail).max(0.0);
            let pv_q = series.pv_kvar.as_ref().map_or(0.0, |q| q[bus][minute]);
            let demand = series.load_kw[bus][minute] + schedule.ewh_kw[bus][block];
            consumed += demand;
            pv_total += pv;
            loads[bus] = BusLoad::new(demand - pv, series.load_kvar[bus][minute] - pv_q);
        }
        ws.solve_voltages(model, &loads).map_err(|e| Error::MinuteFailed {
            minute,
            source: Box::new(e),
        })?;
        let rise = rise_percent(ws.max_voltage(), model);
        let losses = ws.losses_kw(model);
        let slack = consumed - pv_total + losses;
        out.max_rise.push(rise);
        out.min_voltage.push(ws.min_voltage());
        out.losses_kwh += losses / 60.0;
        out.consumed_kwh += consumed / 60.0;
        out.pv_delivered_kwh += pv_total / 60.0;
        if slack > 0.0 {
            out.imported_kwh += slack / 60.0;
        } else {
            out.exported_kwh -= slack / 60.0;
        }
        if rise > VOLTAGE_RISE_LIMIT + RISE_EPS {
            out.violation_minutes += 1;
            if out.first_violation.is_none() {
                out.first_violation = Some(minute);
                if stop_early {
                    return Ok(out);
                }
            }
        }
    }
    Ok(out)
}
