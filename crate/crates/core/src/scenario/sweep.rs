use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::data::{day_of_year, DaySelection, ScenarioData};
use super::run::{day_problem, finish_day, run_scenario, DayResult, RunSettings, ScenarioResult};
use crate::dispatch::{solve, solve_from, DispatchProblem, DispatchSolution};
use crate::error::{Error, Result};
use crate::forecast::ForecastConfig;
use crate::grid::FeederModel;
use crate::mpc::{run_mode, ForecastSource, MpcMode};

/// Day-of-year index the forecast days are centred on (summer solstice).
const FORECAST_CENTER_DAY: usize = 171;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    /// Penetration of the penalty, grouping and forecast experiments.
    pub penetration: f64,
    /// Switching penalties, EUR per group action.
    pub switch_costs: Vec<f64>,
    pub ewh_groups: Vec<usize>,
    pub pv_groups: Vec<usize>,
    pub penetrations: Vec<f64>,
    pub forecast_days: usize,
    pub forecast: ForecastConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            penetration: 0.7,
            switch_costs: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
            ewh_groups: vec![20, 10, 5, 1],
            pv_groups: vec![20, 10, 5, 1],
            penetrations: vec![0.0, 0.1, 0.2, 0.24, 0.3, 0.4, 0.5, 0.6, 0.7],
            forecast_days: 100,
            forecast: ForecastConfig::default(),
        }
    }
}

/// Metrics of failed rows are NaN, which JSON writes as `null`.
fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One point of an experiment. Energies and costs are per simulated year
/// (day weights applied).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub experiment: String,
    pub parameter: String,
    pub value: f64,
    pub variant: String,
    pub penetration: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub shed_kwh: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub planned_shed_kwh: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub switches_per_heater_day: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub total_cost: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub total_with_penalty: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub losses_kwh: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub loss_fraction: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub violation_minutes: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub peak_rise: f64,
    pub error: Option<String>,
}

impl SweepRow {
    fn new(experiment: &str, parameter: &str, value: f64, variant: &str, penetration: f64) -> Self {
        SweepRow {
            experiment: experiment.into(),
            parameter: parameter.into(),
            value,
            variant: variant.into(),
            penetration,
            shed_kwh: f64::NAN,
            planned_shed_kwh: f64::NAN,
            switches_per_heater_day: f64::NAN,
            total_cost: f64::NAN,
            total_with_penalty: f64::NAN,
            losses_kwh: f64::NAN,
            loss_fraction: f64::NAN,
            violation_minutes: f64::NAN,
            peak_rise: f64::NAN,
            error: None,
        }
    }

    fn filled(mut self, res: &ScenarioResult) -> Self {
        let r = &res.report;
        self.shed_kwh = r.shed_energy;
        self.planned_shed_kwh = r.planned_shed;
        self.switches_per_heater_day = r.switches_per_heater_day();
        self.total_cost = r.total_cost;
        self.total_with_penalty = r.total_with_penalty;
        self.losses_kwh = r.losses;
        self.loss_fraction = r.loss_fraction();
        self.violation_minutes = r.violation_minutes;
        self.peak_rise = res.peak_rise;
        self
    }

    fn from_outcome<E: std::fmt::Display>(mut self, outcome: std::result::Result<ScenarioResult, E>) -> Self {
        match outcome {
            Ok(res) => self.filled(&res),
            Err(e) => {
                self.error = Some(e.to_string());
                self
            }
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn extend(&mut self, other: SweepTable) {
        self.rows.extend(other.rows);
    }

    pub fn experiment<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.experiment == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn with_penetration(settings: &RunSettings, penetration: f64) -> RunSettings {
    RunSettings {
        penetration,
        ..settings.clone()
    }
}

/// Runs `per_day` on every day in parallel and regroups the results by
/// sweep point. A failing day fails its whole point.
fn pooled<F>(scenario: &ScenarioData, points: usize, per_day: F) -> Vec<std::result::Result<Vec<DayResult>, String>>
where
    F: Fn(usize) -> Result<Vec<Result<DayResult>>> + Sync + Send,
{
    let by_day: Vec<Result<Vec<Result<DayResult>>>> = (0..scenario.days.len()).into_par_iter().map(per_day).collect();
    let mut out: Vec<std::result::Result<Vec<DayResult>, String>> = (0..points).map(|_| Ok(Vec::new())).collect();
    for day in by_day {
        match day {
            Ok(results) => {
                for (slot, r) in out.iter_mut().zip(results) {
                    match (slot.as_mut(), r) {
                        (Ok(acc), Ok(d)) => acc.push(d),
                        (Ok(_), Err(e)) => *slot = Err(e.to_string()),
                        (Err(_), _) => {}
                    }
                }
            }
            Err(e) => {
                for slot in out.iter_mut().filter(|s| s.is_ok()) {
                    *slot = Err(e.to_string());
                }
            }
        }
    }
    out
}

/// Lowest objective among `candidates`, evaluated on `p`. Ties go to less
/// planned shed, then fewer switching actions.
fn best_of(p: &DispatchProblem, candidates: &[Vec<Vec<bool>>]) -> Option<DispatchSolution> {
    candidates.iter().filter_map(|b| p.evaluate(b).ok()).min_by(|x, y| {
        let key = |s: &DispatchSolution| (s.objective, s.shed_kwh(p.dt), s.switch_actions());
        key(x).partial_cmp(&key(y)).unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Switching-penalty sweep.
///
/// Each day is solved once per penalty; every penalty then takes the best
/// of all those schedules under its own objective, so a heuristic miss at
/// one penalty cannot break the trade-off between switching and cost.
pub fn switching_penalty_sweep(scenario: &ScenarioData, settings: &RunSettings, costs: &[f64]) -> SweepTable {
    let points: Vec<RunSettings> = costs
        .iter()
        .map(|&c| {
            let mut s = settings.clone();
            s.dispatch.switch_cost = c;
            s
        })
        .collect();
    let results = pooled(scenario, points.len(), |pos| {
        let problems: Vec<DispatchProblem> = points
            .iter()
            .map(|s| day_problem(scenario, pos, s))
            .collect::<Result<_>>()?;
        let pool: Vec<Vec<Vec<bool>>> = problems
            .iter()
            .map(|p| solve(p, &settings.solver).map(|s| s.b))
            .collect::<Result<_>>()?;
        Ok(problems
            .iter()
            .zip(&points)
            .map(|(p, s)| {
                let best = best_of(p, &pool).ok_or_else(|| Error::Infeasible("no pooled schedule fits".into()))?;
                finish_day(scenario, pos, s, p, best)
            })
            .collect())
    });
    let rows = costs
        .iter()
        .zip(results)
        .map(|(&c, days)| {
            SweepRow::new("switching-penalty", "switch_cost", c, "", settings.penetration)
                .from_outcome(days.map(|d| ScenarioResult::from_days(scenario, settings.penetration, &d)))
        })
        .collect();
    SweepTable { rows }
}

/// Copies a coarse schedule onto a finer grouping whose groups each lie
/// inside one coarse group.
fn lift(fine: &DispatchProblem, coarse: &DispatchProblem, b: &[Vec<bool>]) -> Option<Vec<Vec<bool>>> {
    let mut owner = BTreeMap::new();
    for (j, g) in coarse.ewh_groups.iter().enumerate() {
        for &m in &g.members {
            owner.insert(m, j);
        }
    }
    fine.ewh_groups
        .iter()
        .map(|g| {
            let j = *owner.get(g.members.first()?)?;
            g.members.iter().all(|m| owner.get(m) == Some(&j)).then(|| b[j].clone())
        })
        .collect()
}

/// Heater grouping sweep. Coarser groupings are solved first; a finer
/// grouping also tries every coarser schedule it refines, both as is and
/// as the start of another descent. A group's storage is aggregated, so a
/// coarse schedule often breaks a member group's limits and only the
/// repaired version survives.
pub fn ewh_grouping_sweep(scenario: &ScenarioData, settings: &RunSettings, groups: &[usize]) -> SweepTable {
    let points: Vec<RunSettings> = groups
        .iter()
        .map(|&g| {
            let mut s = settings.clone();
            s.dispatch.ewh_groups = g;
            s
        })
        .collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&j| groups[j]);
    let results = pooled(scenario, points.len(), |pos| {
        let mut out: Vec<Option<Result<DayResult>>> = (0..points.len()).map(|_| None).collect();
        let mut solved: Vec<(DispatchProblem, Vec<Vec<bool>>)> = Vec::new();
        for &j in &order {
            let s = &points[j];
            let day = day_problem(scenario, pos, s).and_then(|p| {
                let mut pool = vec![solve(&p, &s.solver)?.b];
                for lifted in solved.iter().filter_map(|(q, b)| lift(&p, q, b)) {
                    pool.push(solve_from(&p, Some(&lifted), &s.solver)?.b);
                    pool.push(lifted);
                }
                let best = best_of(&p, &pool).ok_or_else(|| Error::Infeasible("no schedule fits".into()))?;
                solved.push((p.clone(), best.b.clone()));
                finish_day(scenario, pos, s, &p, best)
            });
            out[j] = Some(day);
        }
        Ok(out.into_iter().map(|d| d.expect("every point visited")).collect())
    });
    let rows = groups
        .iter()
        .zip(results)
        .map(|(&g, days)| {
            SweepRow::new("ewh-grouping", "ewh_groups", g as f64, "", settings.penetration)
                .from_outcome(days.map(|d| ScenarioResult::from_days(scenario, settings.penetration, &d)))
        })
        .collect();
    SweepTable { rows }
}

/// PV grouping sweep. The heaters follow one schedule planned with every
/// plant individually controllable; each grouping then re-splits the shed
/// over its groups, which are switched off whole unless they hold a single
/// plant. The finest grouping is also reported with on/off control.
pub fn pv_grouping_sweep(scenario: &ScenarioData, settings: &RunSettings, groups: &[usize]) -> SweepTable {
    let mut variants: Vec<(usize, bool)> = groups.iter().map(|&g| (g, false)).collect();
    if let Some(&finest) = groups.iter().max() {
        variants.push((finest, true));
    }
    let points: Vec<RunSettings> = variants
        .iter()
        .map(|&(g, _)| {
            let mut s = settings.clone();
            s.dispatch.pv_groups = g;
            s
        })
        .collect();
    let results = pooled(scenario, points.len(), |pos| {
        let mut plan_settings = settings.clone();
        plan_settings.dispatch.pv_groups = scenario.feeder.pv_buses().len();
        let plan = solve(&day_problem(scenario, pos, &plan_settings)?, &settings.solver)?;
        Ok(points
            .iter()
            .zip(&variants)
            .map(|(s, &(_, on_off))| {
                let mut p = day_problem(scenario, pos, s)?;
                if on_off {
                    p.pv_groups.iter_mut().for_each(|g| g.rampable = false);
                }
                let sol = p
                    .evaluate(&plan.b)
                    .map_err(|v| Error::Infeasible(format!("schedule does not fit the grouping: {v:?}")))?;
                finish_day(scenario, pos, s, &p, sol)
            })
            .collect())
    });
    let rows = variants
        .iter()
        .zip(results)
        .map(|(&(g, on_off), days)| {
            let variant = if on_off || g < scenario.feeder.pv_buses().len() {
                "on-off"
            } else {
                "rampable"
            };
            SweepRow::new("pv-grouping", "pv_groups", g as f64, variant, settings.penetration)
                .from_outcome(days.map(|d| ScenarioResult::from_days(scenario, settings.penetration, &d)))
        })
        .collect();
    SweepTable { rows }
}

/// Losses, shed and costs over PV penetration.
pub fn penetration_sweep(scenario: &ScenarioData, settings: &RunSettings, penetrations: &[f64]) -> SweepTable {
    let rows = penetrations
        .iter()
        .map(|&pen| {
            SweepRow::new("penetration", "penetration", pen, "", pen)
                .from_outcome(run_scenario(scenario, &with_penetration(settings, pen)).map(|(r, _)| r))
        })
        .collect();
    SweepTable { rows }
}

/// One-sided paired t-test of `mean(a - b) > 0`.
#[derive(Debug, Clone, Serialize)]
pub struct PairedTest {
    pub label: String,
    pub n: usize,
    pub mean_difference: f64,
    pub t: f64,
    pub p_value: f64,
}

pub fn paired_t_test(label: &str, a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need two equal samples of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (t, p) = if var > 0.0 {
        let t = mean / (var / n as f64).sqrt();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
        (t, 1.0 - dist.cdf(t))
    } else if mean > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (f64::NAN, 1.0)
    };
    Ok(PairedTest {
        label: label.into(),
        n,
        mean_difference: mean,
        t,
        p_value: p,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastDay {
    pub date: NaiveDate,
    /// Realized shed per mode, kWh: perfect, hourly, day-ahead.
    pub shed: [f64; 3],
    pub cost: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastComparison {
    pub penetration: f64,
    pub days: Vec<ForecastDay>,
    pub mean_shed: [f64; 3],
    pub mean_cost: [f64; 3],
    /// Day-ahead above hourly, then hourly above perfect.
    pub tests: Vec<PairedTest>,
}

pub const FORECAST_MODES: [MpcMode; 3] = [MpcMode::Perfect, MpcMode::Hourly, MpcMode::DayAhead];

impl ForecastComparison {
    pub fn to_table(&self) -> SweepTable {
        let rows = FORECAST_MODES
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut row = SweepRow::new("forecast", "mode", i as f64, mode_name(*m), self.penetration);
                row.shed_kwh = self.mean_shed[i];
                row.planned_shed_kwh = self.mean_shed[i];
                row.total_cost = self.mean_cost[i];
                row
            })
            .collect();
        SweepTable { rows }
    }
}

fn mode_name(m: MpcMode) -> &'static str {
    match m {
        MpcMode::Perfect => "perfect",
        MpcMode::Hourly => "hourly",
        MpcMode::DayAhead => "day-ahead",
    }
}

/// `n` consecutive synthetic days centred on midsummer.
pub fn forecast_days(feeder: FeederModel, seed: u64, n: usize) -> Result<ScenarioData> {
    if n == 0 || n > 365 {
        return Err(Error::InvalidInput(format!(
            "forecast days must be in 1..=365, got {n}"
        )));
    }
    let start = FORECAST_CENTER_DAY.saturating_sub(n / 2).min(365 - n);
    Ok(ScenarioData::synthetic(
        feeder,
        seed,
        DaySelection::Window { start, len: n },
    ))
}

/// Controls every day with a perfect outlook, hourly re-planning and a
/// single midnight plan, and tests that each step down in information
/// sheds more. Shed is counted per controlled day, unweighted.
pub fn forecast_comparison(
    scenario: &ScenarioData,
    settings: &RunSettings,
    config: &ForecastConfig,
) -> Result<ForecastComparison> {
    let days: Vec<ForecastDay> = (0..scenario.days.len())
        .into_par_iter()
        .map(|pos| -> Result<ForecastDay> {
            let day = &scenario.days[pos];
            let actual = day_problem(scenario, pos, settings)?;
            let source = ForecastSource::Synthetic {
                pv_minutes: &day.pv_per_kwp,
                day: day_of_year(day.date) as u64,
                config: config.clone(),
            };
            let mut shed = [0.0; 3];
            let mut cost = [0.0; 3];
            for (i, &mode) in FORECAST_MODES.iter().enumerate() {
                let out = run_mode(mode, &actual, &source, &settings.solver)?;
                shed[i] = out.shed_kwh(actual.dt);
                cost[i] = out.cost();
            }
            Ok(ForecastDay {
                date: day.date,
                shed,
                cost,
            })
        })
        .collect::<Result<_>>()?;
    let n = days.len().max(1) as f64;
    let mean = |f: &dyn Fn(&ForecastDay) -> f64| days.iter().map(f).sum::<f64>() / n;
    let mean_shed = [0, 1, 2].map(|i| mean(&|d| d.shed[i]));
    let mean_cost = [0, 1, 2].map(|i| mean(&|d| d.cost[i]));
    let col = |i: usize| days.iter().map(|d| d.shed[i]).collect::<Vec<_>>();
    let tests = vec![
        paired_t_test("day-ahead > hourly", &col(2), &col(1))?,
        paired_t_test("hourly > perfect", &col(1), &col(0))?,
    ];
    Ok(ForecastComparison {
        penetration: settings.penetration,
        days,
        mean_shed,
        mean_cost,
        tests,
    })
}

/// Every experiment with `opts` on `scenario`; the forecast days are drawn
/// from the same feeder and seed.
pub fn run_all(
    scenario: &ScenarioData,
    settings: &RunSettings,
    opts: &SweepOptions,
) -> Result<(SweepTable, ForecastComparison)> {
    let at = with_penetration(settings, opts.penetration);
    let mut table = switching_penalty_sweep(scenario, &at, &opts.switch_costs);
    table.extend(ewh_grouping_sweep(scenario, &at, &opts.ewh_groups));
    table.extend(pv_grouping_sweep(scenario, &at, &opts.pv_groups));
    table.extend(penetration_sweep(scenario, settings, &opts.penetrations));
    let days = forecast_days(scenario.feeder.clone(), scenario.seed, opts.forecast_days)?;
    let forecast = forecast_comparison(&days, &at, &opts.forecast)?;
    table.extend(forecast.to_table());
    Ok((table, forecast))
}
