use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::{price_outcome, CostReport};
use super::data::{day_of_year, ScenarioData};
use crate::assets::{block_means, default_fleet, Ewh, PvPlant, STEPS_PER_DAY};
use crate::dispatch::{
    apply_shedding, build_problem, solve, Curtailment, DayInputs, DispatchOptions, DispatchProblem, DispatchSolution,
    SolverOptions,
};
use crate::error::{Error, Result};
use crate::grid::{simulate_minutes, BusSchedule, MinuteSimResult};
use crate::seed::sub_seed;

/// Forward and backward limit used when the heaters follow prices only.
const UNCONSTRAINED_KW: f64 = 1e9;

/// How the water heaters are operated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    /// Cheapest charging by spot price alone; PV is neither watched nor shed.
    PriceOnly,
    /// The full dispatch with the transformer limits and PV shedding.
    #[default]
    Dispatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub penetration: f64,
    pub control: Control,
    pub dispatch: DispatchOptions,
    pub solver: SolverOptions,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            penetration: 0.0,
            control: Control::Dispatch,
            dispatch: DispatchOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// Heaters with their seeded initial charge for day `pos` of the scenario.
pub fn day_fleet(scenario: &ScenarioData, pos: usize) -> Vec<Ewh> {
    let buses: Vec<(usize, u32)> = scenario
        .feeder
        .buses()
        .iter()
        .filter(|b| b.has_load)
        .map(|b| (b.id, b.households))
        .collect();
    let doy = day_of_year(scenario.days[pos].date) as u64;
    default_fleet(&buses, sub_seed(scenario.seed, &[0xf1ee7, doy]))
}

/// One plant per PV bus, sized by `kwp_per_household`.
pub fn day_plants(scenario: &ScenarioData, kwp_per_household: f64) -> Result<Vec<PvPlant>> {
    scenario
        .feeder
        .buses()
        .iter()
        .filter(|b| b.has_pv)
        .enumerate()
        .map(|(id, b)| PvPlant::new(id, b.id, (kwp_per_household * b.households as f64).max(1e-12)))
        .collect()
}

/// Dispatch inputs for day `pos` at `kwp_per_household`.
pub fn day_inputs(scenario: &ScenarioData, pos: usize, kwp_per_household: f64) -> Result<DayInputs> {
    let day = scenario
        .days
        .get(pos)
        .ok_or_else(|| Error::InvalidInput(format!("scenario has no day {pos}")))?;
    let plants = day_plants(scenario, kwp_per_household)?;
    let per_kwp = block_means(&day.pv_per_kwp, 10);
    let scale = if kwp_per_household > 0.0 { 1.0 } else { 0.0 };
    Ok(DayInputs {
        fleet: day_fleet(scenario, pos),
        pv_kw: plants
            .iter()
            .map(|p| per_kwp.iter().map(|v| v * p.peak_power * scale).collect())
            .collect(),
        plants,
        load_kw: block_means(&day.total_load(), 10),
        spot: day.spot_steps(),
        draw_profile: scenario.draw_profile.clone(),
        p_min: scenario.feeder.p_min,
        p_max: scenario.feeder.p_max,
    })
}

/// The dispatch problem of day `pos` with the actual PV.
pub fn day_problem(scenario: &ScenarioData, pos: usize, settings: &RunSettings) -> Result<DispatchProblem> {
    let kwp = scenario.kwp_per_household(settings.penetration);
    build_problem(&day_inputs(scenario, pos, kwp)?, &settings.dispatch)
}

/// The switching plan under `control`, evaluated on `problem`.
pub fn plan_day(problem: &DispatchProblem, control: Control, solver: &SolverOptions) -> Result<DispatchSolution> {
    match control {
        Control::Dispatch => solve(problem, solver),
        Control::PriceOnly => {
            let blind = price_only_problem(problem);
            let plan = solve(&blind, solver)?;
            // same switching, re-costed without any shedding
            blind
                .evaluate(&plan.b)
                .map_err(|v| Error::Infeasible(format!("price-only plan failed re-evaluation: {v:?}")))
        }
    }
}

/// `problem` with PV hidden from the optimizer and no transformer limits.
pub fn price_only_problem(problem: &DispatchProblem) -> DispatchProblem {
    let mut blind = problem.clone();
    for g in blind.pv_groups.iter_mut() {
        g.available.iter_mut().for_each(|a| *a = 0.0);
    }
    blind.p_min = -UNCONSTRAINED_KW;
    blind.p_max = UNCONSTRAINED_KW;
    blind
}

/// A simulated day.
#[derive(Debug, Clone, Serialize)]
pub struct DayResult {
    pub date: NaiveDate,
    pub weight: f64,
    pub solution: DispatchSolution,
    pub curtailment: Curtailment,
    pub sim: MinuteSimResult,
    /// Unweighted accounting of this day.
    pub report: CostReport,
}

/// Heater power per bus and step for a switching plan.
pub fn heater_schedule(problem: &DispatchProblem, fleet: &[Ewh], b: &[Vec<bool>], n_buses: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; problem.steps]; n_buses];
    for (g, row) in problem.ewh_groups.iter().zip(b) {
        for &id in &g.members {
            let h = &fleet[id];
            for (k, &on) in row.iter().enumerate() {
                if on {
                    out[h.bus][k] += h.power_rating;
                }
            }
        }
    }
    out
}

/// Applies a plan to the minute data of day `pos` and runs the power flow.
pub fn verify_day(
    scenario: &ScenarioData,
    pos: usize,
    kwp_per_household: f64,
    problem: &DispatchProblem,
    solution: &DispatchSolution,
    control: Control,
) -> Result<(Curtailment, MinuteSimResult)> {
    let day = &scenario.days[pos];
    let feeder = &scenario.feeder;
    let n = feeder.n_buses();
    let plants = day_plants(scenario, kwp_per_household)?;
    let plant_minutes: Vec<Vec<f64>> = plants
        .iter()
        .map(|p| day.pv_per_kwp.iter().map(|v| v * p.peak_power).collect())
        .collect();
    let curtailment = match control {
        Control::PriceOnly => Curtailment {
            plant_kw: vec![vec![0.0; plant_minutes.first().map_or(0, Vec::len)]; plants.len()],
            planned_kwh: 0.0,
            realized_kwh: 0.0,
            capped_steps: Vec::new(),
        },
        Control::Dispatch => {
            let rampable = problem.pv_groups.iter().all(|g| g.rampable);
            apply_shedding(problem, solution, &plant_minutes, rampable)?
        }
    };
    let fleet = day_fleet(scenario, pos);
    let mut schedule = BusSchedule::idle(n, problem.steps, 10);
    schedule.ewh_kw = heater_schedule(problem, &fleet, &solution.b, n);
    if curtailment.realized_kwh > 0.0 {
        let mut curtail = vec![vec![0.0; day.pv_per_kwp.len()]; n];
        for (p, row) in plants.iter().zip(&curtailment.plant_kw) {
            for (c, v) in curtail[p.bus].iter_mut().zip(row) {
                *c += v;
            }
        }
        schedule.curtail_kw = Some(curtail);
    }
    let series = day.minute_series(feeder, kwp_per_household);
    let sim = simulate_minutes(feeder, &series, &schedule)?;
    Ok((curtailment, sim))
}

/// Plans, verifies and prices day `pos`.
pub fn run_day(scenario: &ScenarioData, pos: usize, settings: &RunSettings) -> Result<DayResult> {
    let problem = day_problem(scenario, pos, settings)?;
    if problem.steps != STEPS_PER_DAY {
        return Err(Error::InvalidInput(format!("day {pos} has {} steps", problem.steps)));
    }
    let solution = plan_day(&problem, settings.control, &settings.solver)?;
    finish_day(scenario, pos, settings, &problem, solution)
}

/// Verifies and prices an already planned day.
pub fn finish_day(
    scenario: &ScenarioData,
    pos: usize,
    settings: &RunSettings,
    problem: &DispatchProblem,
    solution: DispatchSolution,
) -> Result<DayResult> {
    let kwp = scenario.kwp_per_household(settings.penetration);
    let (curtailment, sim) = verify_day(scenario, pos, kwp, problem, &solution, settings.control)?;
    let mut report = price_outcome(problem, &solution, curtailment.realized_kwh);
    report.losses = sim.losses_kwh;
    report.consumed = sim.consumed_kwh;
    report.pv_delivered = sim.pv_delivered_kwh;
    report.imported = sim.imported_kwh;
    report.exported = sim.exported_kwh;
    report.violation_minutes = sim.violation_minutes as f64;
    let day = &scenario.days[pos];
    Ok(DayResult {
        date: day.date,
        weight: day.weight,
        solution,
        curtailment,
        sim,
        report,
    })
}

/// Every day of a scenario under one setting.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub penetration: f64,
    pub kwp_per_household: f64,
    /// Day reports weighted up to the year.
    pub report: CostReport,
    pub peak_rise: f64,
    pub min_voltage: f64,
    pub days: Vec<DaySummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DaySummary {
    pub date: NaiveDate,
    pub weight: f64,
    pub report: CostReport,
    pub peak_rise: f64,
    pub objective: f64,
    pub gap: f64,
}

impl ScenarioResult {
    pub fn from_days(scenario: &ScenarioData, penetration: f64, days: &[DayResult]) -> Self {
        let report = days
            .iter()
            .map(|d| d.report.scaled(d.weight))
            .collect::<Vec<_>>()
            .iter()
            .sum();
        ScenarioResult {
            penetration,
            kwp_per_household: scenario.kwp_per_household(penetration),
            report,
            peak_rise: days.iter().map(|d| d.sim.peak_rise()).fold(0.0, f64::max),
            min_voltage: days
                .iter()
                .map(|d| d.sim.lowest_voltage())
                .fold(f64::INFINITY, f64::min),
            days: days
                .iter()
                .map(|d| DaySummary {
                    date: d.date,
                    weight: d.weight,
                    report: d.report.clone(),
                    peak_rise: d.sim.peak_rise(),
                    objective: d.solution.objective,
                    gap: d.solution.gap(),
                })
                .collect(),
        }
    }
}

/// Runs every day in parallel.
pub fn run_scenario(scenario: &ScenarioData, settings: &RunSettings) -> Result<(ScenarioResult, Vec<DayResult>)> {
    let days: Vec<DayResult> = (0..scenario.days.len())
        .into_par_iter()
        .map(|pos| run_day(scenario, pos, settings))
        .collect::<Result<_>>()?;
    Ok((ScenarioResult::from_days(scenario, settings.penetration, &days), days))
}
