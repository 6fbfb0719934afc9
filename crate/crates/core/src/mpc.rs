//! Hourly receding-horizon control and the day-ahead baseline.
//!
//! Every hour the controller receives a fresh PV forecast, solves the
//! dispatch from the current hour to midnight starting at the measured
//! storage state, and applies the first hour of heater switching. PV
//! shedding itself is decided in real time against the actual output:
//! whatever the transformer export limit requires given the applied
//! heater schedule.

use serde::{Deserialize, Serialize};

use crate::assets::soc_step;
use crate::dispatch::{solve, DispatchProblem, DispatchSolution, SolveStatus, SolverOptions, FEAS_TOL};
use crate::error::{Error, Result};
use crate::forecast::{make_forecast, ForecastConfig};

pub const STEPS_PER_HOUR: usize = 6;
/// Forward limit used when a forecast makes the shrunk problem infeasible.
const RELAXED_P_MAX: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpcMode {
    /// One solve on the actual PV.
    Perfect,
    /// Re-solve every hour on a fresh forecast.
    #[default]
    Hourly,
    /// One solve at midnight on the midnight forecast.
    DayAhead,
}

impl std::str::FromStr for MpcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(MpcMode::Perfect),
            "hourly" => Ok(MpcMode::Hourly),
            "day-ahead" => Ok(MpcMode::DayAhead),
            other => Err(Error::InvalidInput(format!(
                "unknown mode {other:?} (perfect, hourly, day-ahead)"
            ))),
        }
    }
}

/// Where the controller's PV outlook comes from.
#[derive(Debug, Clone)]
pub enum ForecastSource<'a> {
    Perfect,
    /// Synthetic forecasts of the feeder's total PV, applied to every group
    /// as a per-step ratio to the actual output.
    Synthetic {
        pv_minutes: &'a [f64],
        day: u64,
        config: ForecastConfig,
    },
}

impl ForecastSource<'_> {
    /// The full-day problem as seen from `hour`: `actual` with every PV
    /// group's availability replaced by the forecast.
    pub fn issue(&self, actual: &DispatchProblem, hour: usize) -> Result<DispatchProblem> {
        match self {
            ForecastSource::Perfect => Ok(actual.clone()),
            ForecastSource::Synthetic {
                pv_minutes,
                day,
                config,
            } => {
                let trace = make_forecast(pv_minutes, hour, *day, config)?;
                if trace.values.len() != actual.steps {
                    return Err(Error::InvalidInput(format!(
                        "forecast covers {} steps, problem has {}",
                        trace.values.len(),
                        actual.steps
                    )));
                }
                let mut p = actual.clone();
                for g in p.pv_groups.iter_mut() {
                    for (k, a) in g.available.iter_mut().enumerate() {
                        if trace.actual[k] > 0.0 {
                            *a *= trace.values[k] / trace.actual[k];
                        }
                    }
                }
                Ok(p)
            }
        }
    }
}

/// Controller state at an hour boundary.
#[derive(Debug, Clone, Serialize)]
pub struct MpcState {
    pub hour: usize,
    /// Measured storage per group.
    pub soc_hat: Vec<f64>,
    pub prev_on: Vec<bool>,
    /// Switching applied so far, `[group][step]`.
    pub applied: Vec<Vec<bool>>,
    /// Realized storage trajectory so far, `[group][0..=step]`.
    pub soc_trace: Vec<Vec<f64>>,
    /// Realized spot energy, shed and switching cost so far.
    pub cost: f64,
}

impl MpcState {
    pub fn start(p: &DispatchProblem) -> Self {
        MpcState {
            hour: 0,
            soc_hat: p.ewh_groups.iter().map(|g| g.soc0).collect(),
            prev_on: p.ewh_groups.iter().map(|g| g.initial_on).collect(),
            applied: vec![Vec::new(); p.n_ewh()],
            soc_trace: p.ewh_groups.iter().map(|g| vec![g.soc0]).collect(),
            cost: 0.0,
        }
    }

    pub fn step(&self) -> usize {
        self.hour * STEPS_PER_HOUR
    }
}

/// What one hourly solve decided.
#[derive(Debug, Clone, Serialize)]
pub struct HourControls {
    pub hour: usize,
    /// Steps in the shrunk problem.
    pub horizon: usize,
    /// Switching for the hour, `[group][step]`.
    pub b: Vec<Vec<bool>>,
    pub status: SolveStatus,
    /// Storage the solve started from, per group.
    pub start_soc: Vec<f64>,
    /// Storage the solve predicted at the end of the hour.
    pub predicted_end_soc: Vec<f64>,
    /// Whether the forward limit had to be lifted to find a schedule.
    pub relaxed: bool,
}

/// Solves from `state.hour` to the end of `forecast` and applies the first
/// hour of switching to the actual draws.
pub fn mpc_step(
    state: &MpcState,
    forecast: &DispatchProblem,
    actual: &DispatchProblem,
    solver: &SolverOptions,
) -> Result<(HourControls, MpcState)> {
    let start = state.step();
    if start >= actual.steps {
        return Err(Error::InvalidInput(format!(
            "hour {} is past the end of the day",
            state.hour
        )));
    }
    let shrunk = forecast.tail(start, &state.soc_hat, &state.prev_on)?;
    let (sol, relaxed) = solve_or_relax(&shrunk, solver)?;
    let apply = STEPS_PER_HOUR.min(shrunk.steps);

    let mut next = state.clone();
    let mut b = Vec::with_capacity(actual.n_ewh());
    for (i, g) in actual.ewh_groups.iter().enumerate() {
        let row: Vec<bool> = sol.b[i][..apply].to_vec();
        let mut x = state.soc_hat[i];
        for (j, &on) in row.iter().enumerate() {
            x = soc_step(x, g.rating, on, actual.dt, g.draws[start + j]).soc;
            next.soc_trace[i].push(x);
        }
        next.soc_hat[i] = x;
        next.prev_on[i] = *row.last().unwrap_or(&state.prev_on[i]);
        next.applied[i].extend_from_slice(&row);
        b.push(row);
    }
    next.hour += 1;
    let controls = HourControls {
        hour: state.hour,
        horizon: shrunk.steps,
        start_soc: sol.soc.iter().map(|s| s[0]).collect(),
        predicted_end_soc: sol.soc.iter().map(|s| s[apply]).collect(),
        b,
        status: sol.status,
        relaxed,
    };
    next.cost = realize(&actual_prefix(actual, next.step()), &next.applied)
        .solution
        .objective;
    Ok((controls, next))
}

fn solve_or_relax(p: &DispatchProblem, solver: &SolverOptions) -> Result<(DispatchSolution, bool)> {
    match solve(p, solver) {
        Ok(sol) => Ok((sol, false)),
        Err(Error::Infeasible(why)) => {
            log::warn!("forecast problem infeasible ({why}); lifting the forward limit");
            let mut relaxed = p.clone();
            relaxed.p_max = RELAXED_P_MAX;
            Ok((solve(&relaxed, solver)?, true))
        }
        Err(e) => Err(e),
    }
}

fn actual_prefix(p: &DispatchProblem, steps: usize) -> DispatchProblem {
    let steps = steps.min(p.steps);
    let mut q = p.clone();
    q.steps = steps;
    q.spot.truncate(steps);
    q.baseline_load.truncate(steps);
    for g in q.ewh_groups.iter_mut() {
        g.draws.truncate(steps);
        g.terminal_min = 0.0;
    }
    for g in q.pv_groups.iter_mut() {
        g.available.truncate(steps);
    }
    q
}

/// Outcome of an applied switching schedule on the actual day.
#[derive(Debug, Clone, Serialize)]
pub struct Realized {
    /// The schedule with shed chosen against the actual PV. Its objective
    /// is the realized cost including the switching penalty.
    pub solution: DispatchSolution,
    /// Steps where the schedule pushed the transformer above its forward
    /// limit, with the excess in kW.
    pub overloads: Vec<(usize, f64)>,
    /// Groups that ran empty or ended below their terminal requirement.
    pub storage_shortfalls: Vec<usize>,
}

/// Applies `b` to the actual problem, shedding exactly what the export
/// limit requires at each step.
pub fn realize(actual: &DispatchProblem, b: &[Vec<bool>]) -> Realized {
    let n = actual.steps;
    let mut soc = Vec::with_capacity(actual.n_ewh());
    let mut storage_shortfalls = Vec::new();
    for (i, g) in actual.ewh_groups.iter().enumerate() {
        let mut traj = vec![g.soc0];
        let mut x = g.soc0;
        let mut short = false;
        for k in 0..n {
            x = soc_step(x, g.rating, b[i][k], actual.dt, g.draws[k]).soc;
            short |= x < -FEAS_TOL || x > g.soc_max + FEAS_TOL;
            traj.push(x);
        }
        if short || x < g.terminal_min - FEAS_TOL {
            storage_shortfalls.push(i);
        }
        soc.push(traj);
    }
    let mut shed = vec![vec![0.0; n]; actual.pv_groups.len()];
    let mut overloads = Vec::new();
    for k in 0..n {
        let e = actual.ewh_power(b, k);
        match actual.required_shed(k, e) {
            Ok(total) if total > 0.0 => actual.split_shed(k, total, &mut shed),
            Ok(_) => {}
            Err(excess) => overloads.push((k, excess)),
        }
    }
    let (s_on, s_off) = crate::dispatch::switch_actions(actual, b);
    let objective = actual.objective(b, &shed, &s_on, &s_off);
    Realized {
        solution: DispatchSolution {
            b: b.to_vec(),
            shed,
            s_on,
            s_off,
            soc,
            objective,
            lower_bound: f64::NEG_INFINITY,
            status: SolveStatus::Heuristic,
        },
        overloads,
        storage_shortfalls,
    }
}

/// A whole controlled day.
#[derive(Debug, Clone, Serialize)]
pub struct MpcOutcome {
    pub mode: MpcMode,
    pub realized: Realized,
    pub hours: Vec<HourControls>,
    /// Largest gap between the measured storage handed to a solve and the
    /// storage that solve started from, over all hour boundaries.
    pub handoff_error: f64,
    /// Largest gap between predicted and measured storage at the end of an
    /// applied hour.
    pub prediction_error: f64,
}

impl MpcOutcome {
    pub fn shed_kwh(&self, dt: f64) -> f64 {
        self.realized.solution.shed_kwh(dt)
    }

    pub fn cost(&self) -> f64 {
        self.realized.solution.objective
    }

    /// Hour-boundary storage values of the realized trajectory,
    /// `[boundary][group]` for boundaries `1..hours`.
    pub fn boundary_soc(&self) -> Vec<Vec<f64>> {
        let soc = &self.realized.solution.soc;
        let hours = self.hours.len();
        (1..hours)
            .map(|h| soc.iter().map(|traj| traj[h * STEPS_PER_HOUR]).collect())
            .collect()
    }
}

/// Receding-horizon control over the whole day.
pub fn run_hourly(actual: &DispatchProblem, source: &ForecastSource, solver: &SolverOptions) -> Result<MpcOutcome> {
    actual.validate()?;
    let hours = actual.steps.div_ceil(STEPS_PER_HOUR);
    let mut state = MpcState::start(actual);
    let mut log = Vec::with_capacity(hours);
    let mut handoff_error: f64 = 0.0;
    let mut prediction_error: f64 = 0.0;
    for _ in 0..hours {
        let forecast = source.issue(actual, state.hour)?;
        let (controls, next) = mpc_step(&state, &forecast, actual, solver)?;
        for i in 0..actual.n_ewh() {
            handoff_error = handoff_error.max((controls.start_soc[i] - state.soc_hat[i]).abs());
            prediction_error = prediction_error.max((controls.predicted_end_soc[i] - next.soc_hat[i]).abs());
        }
        log.push(controls);
        state = next;
    }
    let realized = realize(actual, &state.applied);
    for (i, traj) in realized.solution.soc.iter().enumerate() {
        debug_assert_eq!(traj, &state.soc_trace[i]);
    }
    Ok(MpcOutcome {
        mode: MpcMode::Hourly,
        realized,
        hours: log,
        handoff_error,
        prediction_error,
    })
}

/// One solve on the midnight forecast, applied open loop.
pub fn run_day_ahead(actual: &DispatchProblem, source: &ForecastSource, solver: &SolverOptions) -> Result<MpcOutcome> {
    single_solve(actual, &source.issue(actual, 0)?, solver, MpcMode::DayAhead)
}

/// One solve on the actual PV.
pub fn run_perfect(actual: &DispatchProblem, solver: &SolverOptions) -> Result<MpcOutcome> {
    single_solve(actual, actual, solver, MpcMode::Perfect)
}

pub fn run_mode(
    mode: MpcMode,
    actual: &DispatchProblem,
    source: &ForecastSource,
    solver: &SolverOptions,
) -> Result<MpcOutcome> {
    match mode {
        MpcMode::Perfect => run_perfect(actual, solver),
        MpcMode::Hourly => run_hourly(actual, source, solver),
        MpcMode::DayAhead => run_day_ahead(actual, source, solver),
    }
}

fn single_solve(
    actual: &DispatchProblem,
    plan: &DispatchProblem,
    solver: &SolverOptions,
    mode: MpcMode,
) -> Result<MpcOutcome> {
    actual.validate()?;
    let (sol, relaxed) = solve_or_relax(plan, solver)?;
    let realized = realize(actual, &sol.b);
    let prediction_error = sol
        .soc
        .iter()
        .zip(&realized.solution.soc)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let controls = HourControls {
        hour: 0,
        horizon: plan.steps,
        start_soc: sol.soc.iter().map(|s| s[0]).collect(),
        predicted_end_soc: sol.soc.iter().map(|s| s[plan.steps]).collect(),
        b: sol.b.clone(),
        status: sol.status,
        relaxed,
    };
    Ok(MpcOutcome {
        mode,
        realized,
        hours: vec![controls],
        handoff_error: 0.0,
        prediction_error,
    })
}
