//! Acceptance suite. Prints one line per criterion and one indented line
//! per sub-check, then exits nonzero if a check fails that is not listed in
//! `KNOWN_FAILURES`. With `PVFLEX_ACCEPTANCE_STRICT=1` every failure counts.
//!
//! Run with `cargo test -p pvflex-core --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;

use pvflex::assets::{PvModel, DEFAULT_CAPACITY_FACTOR, MINUTES_PER_DAY, STEPS_PER_DAY};
use pvflex::dispatch::{check_feasible, solve, solve_bnb, solve_exact, BnbOptions, SolverKind, SolverOptions};
use pvflex::forecast::{make_forecast, ForecastConfig};
use pvflex::grid::feeder_calibration_report;
use pvflex::mpc::{run_hourly, ForecastSource};
use pvflex::scenario::{
    calibration_week, day_of_year, day_problem, ewh_grouping_sweep, forecast_comparison, forecast_days,
    hosting_capacity, penetration_sweep, pv_grouping_sweep, switching_penalty_sweep, HostingMethod, HostingResult,
    RunSettings, ScenarioConfig, ScenarioData, SweepOptions, SweepRow,
};

mod common;
use common::flow::{worst_newton_gap, worst_two_bus_gap};
use common::{feasible_problem, random_problem, Shape};

/// Sub-checks that fail on the synthetic data; see the README.
const KNOWN_FAILURES: &[&str] = &["7.ewh", "8.dr-losses"];

const PENETRATION: f64 = 0.7;

struct Check {
    key: &'static str,
    ok: bool,
    detail: String,
}

fn check(key: &'static str, ok: bool, detail: impl Into<String>) -> Check {
    Check {
        key,
        ok,
        detail: detail.into(),
    }
}

/// The default scenario: seed 2013, representative days of the synthetic year.
fn config() -> &'static ScenarioConfig {
    static CFG: OnceLock<ScenarioConfig> = OnceLock::new();
    CFG.get_or_init(ScenarioConfig::default)
}

fn scenario() -> &'static ScenarioData {
    static S: OnceLock<ScenarioData> = OnceLock::new();
    S.get_or_init(|| config().scenario().expect("default scenario"))
}

fn settings_at(penetration: f64) -> RunSettings {
    let mut s = config().run_settings();
    s.penetration = penetration;
    s
}

fn hosting(method: HostingMethod) -> &'static HostingResult {
    static H: OnceLock<[OnceLock<HostingResult>; 3]> = OnceLock::new();
    let slots = H.get_or_init(Default::default);
    let i = method as usize;
    slots[i].get_or_init(|| hosting_capacity(scenario(), method, &config().hosting).expect("hosting capacity"))
}

fn weakly(values: &[f64], increasing: bool) -> bool {
    values.windows(2).all(|w| {
        let tol = 1e-9 * (1.0 + w[0].abs());
        if increasing {
            w[1] >= w[0] - tol
        } else {
            w[1] <= w[0] + tol
        }
    })
}

fn list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn oracle_equivalence() -> Vec<Check> {
    let start = Instant::now();
    let mut rng = common::rng(1);
    let shape = Shape {
        max_groups: 4,
        max_steps: 24,
        max_binaries: 24,
    };
    let mut worst: f64 = 0.0;
    let mut disagreements = 0;
    for _ in 0..50 {
        let p = feasible_problem(&mut rng, shape);
        let exact = solve_exact(&p).expect("feasible instance");
        match solve_bnb(
            &p,
            &BnbOptions {
                gap_tol: 0.0,
                ..Default::default()
            },
        ) {
            Ok(b) => worst = worst.max((b.objective - exact.objective).abs()),
            Err(_) => disagreements += 1,
        }
    }
    let elapsed = start.elapsed();
    vec![
        check(
            "1.objective",
            disagreements == 0 && worst <= 1e-6,
            format!("50 instances, largest gap {worst:.2e}, {disagreements} bnb failures"),
        ),
        check(
            "1.runtime",
            elapsed < Duration::from_secs(60),
            format!("{:.1} s", elapsed.as_secs_f64()),
        ),
    ]
}

fn constraint_residuals() -> Vec<Check> {
    let mut rng = common::rng(2);
    let shape = Shape {
        max_groups: 4,
        max_steps: 36,
        max_binaries: 24,
    };
    let mut solutions = 0;
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..500 {
        let p = random_problem(&mut rng, shape);
        let kinds = [SolverKind::Exact, SolverKind::Bnb, SolverKind::Heuristic];
        for kind in kinds {
            let opts = SolverOptions {
                time_limit: Some(2.0),
                ..SolverOptions::with_kind(kind)
            };
            if let Ok(sol) = solve(&p, &opts) {
                let rep = check_feasible(&p, &sol);
                solutions += 1;
                worst = worst.max(rep.worst());
                if !rep.shapes_ok || rep.worst() > 1e-9 {
                    bad += 1;
                }
            }
        }
    }
    vec![check(
        "2.residuals",
        bad == 0 && solutions > 0,
        format!("500 instances, {solutions} solutions, worst residual {worst:.2e}, {bad} failing"),
    )]
}

fn calibration_anchors() -> Vec<Check> {
    let h = hosting(HostingMethod::Dachcz);
    let report = feeder_calibration_report().expect("calibration report");
    vec![
        check(
            "3.dachcz",
            (h.penetration - 0.2857).abs() <= 0.005,
            format!(
                "{:.2} % at {:.3} kWp/household",
                100.0 * h.penetration,
                h.kwp_per_household
            ),
        ),
        check(
            "3.peak-voltage",
            report.peak_min_voltage >= 0.96,
            format!("min voltage {:.4} p.u. at peak load", report.peak_min_voltage),
        ),
    ]
}

fn hosting_ordering() -> Vec<Check> {
    let start = Instant::now();
    let [d, c, r] =
        [HostingMethod::Dachcz, HostingMethod::Correlation, HostingMethod::Dr].map(|m| hosting(m).penetration);
    let elapsed = start.elapsed();
    let detail = format!(
        "dachcz {:.2} %, correlation {:.2} %, dr {:.2} %",
        100.0 * d,
        100.0 * c,
        100.0 * r
    );
    vec![
        check("4.order", d < c && c < r, detail),
        check(
            "4.margin",
            r - d >= 0.10,
            format!("dr - dachcz = {:.2} pp", 100.0 * (r - d)),
        ),
        check(
            "4.runtime",
            elapsed < Duration::from_secs(15 * 60),
            format!("{:.1} s", elapsed.as_secs_f64()),
        ),
    ]
}

fn forecast_trend() -> Vec<Check> {
    let days = forecast_days(scenario().feeder.clone(), config().seed, 100).expect("forecast days");
    let cmp = forecast_comparison(&days, &settings_at(PENETRATION), &ForecastConfig::default()).expect("comparison");
    let [perfect, hourly, day_ahead] = cmp.mean_shed;
    let p: Vec<f64> = cmp.tests.iter().map(|t| t.p_value).collect();
    vec![
        check(
            "5.order",
            day_ahead > hourly && hourly > perfect,
            format!(
                "{} days, mean shed perfect {perfect:.2}, hourly {hourly:.2}, day-ahead {day_ahead:.2} kWh",
                cmp.days.len()
            ),
        ),
        check(
            "5.significance",
            p.iter().all(|&v| v < 0.01),
            format!(
                "p(day-ahead > hourly) = {:.2e}, p(hourly > perfect) = {:.2e}",
                p[0], p[1]
            ),
        ),
    ]
}

fn switching_penalty() -> Vec<Check> {
    let costs = SweepOptions::default().switch_costs;
    let table = switching_penalty_sweep(scenario(), &settings_at(PENETRATION), &costs);
    if let Some(r) = table.rows.iter().find(|r| !r.ok()) {
        return vec![check("6.sweep", false, format!("c = {}: {:?}", r.value, r.error))];
    }
    let switches: Vec<f64> = table.rows.iter().map(|r| r.switches_per_heater_day).collect();
    let shed: Vec<f64> = table.rows.iter().map(|r| r.planned_shed_kwh).collect();
    let last = *switches.last().expect("six points");
    vec![
        check(
            "6.switches",
            weakly(&switches, false),
            format!("switches/heater/day {}", list(&switches)),
        ),
        check(
            "6.shed",
            weakly(&shed, true),
            format!("planned shed kWh {}", list(&shed)),
        ),
        check(
            "6.last",
            last <= 4.0,
            format!("{last:.3} switches/heater/day at c = {}", costs[costs.len() - 1]),
        ),
    ]
}

fn grouping() -> Vec<Check> {
    let at = settings_at(PENETRATION);
    let ewh = ewh_grouping_sweep(scenario(), &at, &[20, 10, 5, 1]);
    let pv = pv_grouping_sweep(scenario(), &at, &[20, 10, 5, 1]);
    let failed = ewh.rows.iter().chain(&pv.rows).find(|r| !r.ok());
    if let Some(r) = failed {
        return vec![check(
            "7.sweep",
            false,
            format!("{} {}: {:?}", r.experiment, r.value, r.error),
        )];
    }
    let ewh_shed: Vec<f64> = ewh.rows.iter().map(|r| r.planned_shed_kwh).collect();
    let on_off = |g: f64| -> &SweepRow {
        pv.rows
            .iter()
            .rev()
            .find(|r| r.value == g && r.variant == "on-off")
            .expect("on/off row")
    };
    let pv_shed: Vec<f64> = [20.0, 10.0, 5.0, 1.0].map(|g| on_off(g).shed_kwh).to_vec();
    let rampable = pv
        .rows
        .iter()
        .find(|r| r.variant == "rampable")
        .expect("rampable row")
        .shed_kwh;
    vec![
        check(
            "7.ewh",
            weakly(&ewh_shed, true),
            format!("planned shed kWh over 20, 10, 5, 1 groups {}", list(&ewh_shed)),
        ),
        check(
            "7.pv",
            weakly(&pv_shed, true),
            format!("realized on/off shed kWh over 20, 10, 5, 1 groups {}", list(&pv_shed)),
        ),
        check(
            "7.on-off",
            pv_shed[0] >= rampable,
            format!(
                "on/off {:.3} kWh vs rampable {rampable:.3} kWh at 20 groups",
                pv_shed[0]
            ),
        ),
    ]
}

fn loss_trend() -> Vec<Check> {
    let dr = hosting(HostingMethod::Dr).penetration;
    let table = penetration_sweep(scenario(), &settings_at(0.0), &[0.0, 0.24, dr]);
    if let Some(r) = table.rows.iter().find(|r| !r.ok()) {
        return vec![check("8.sweep", false, format!("{}: {:?}", r.value, r.error))];
    }
    let loss: Vec<f64> = table.rows.iter().map(|r| r.losses_kwh).collect();
    vec![
        check(
            "8.minimum",
            loss[1] < loss[0],
            format!("losses {:.0} kWh at 24 % vs {:.0} kWh at 0 %", loss[1], loss[0]),
        ),
        check(
            "8.dr-losses",
            loss[2] <= 1.1 * loss[0],
            format!(
                "losses {:.0} kWh at {:.2} % (dr capacity), ratio {:.3} to 0 %",
                loss[2],
                100.0 * dr,
                loss[2] / loss[0]
            ),
        ),
    ]
}

fn power_flow() -> Vec<Check> {
    let newton = worst_newton_gap(&mut common::rng(9), 500);
    let two_bus = worst_two_bus_gap();
    vec![
        check(
            "9.newton",
            newton <= 1e-7,
            format!("500 feeders, largest gap {newton:.2e} p.u."),
        ),
        check("9.two-bus", two_bus <= 1e-8, format!("largest gap {two_bus:.2e} p.u.")),
    ]
}

fn forecast_envelope() -> Vec<Check> {
    let mut rng = common::rng(10);
    let plant = PvModel::new(7, DEFAULT_CAPACITY_FACTOR);
    let mut sampled = 0;
    let mut outside = 0;
    while sampled < 10_000 {
        let day = rng.random_range(0..365usize);
        let minutes = plant.day(day);
        let config = ForecastConfig {
            seed: rng.random(),
            ..Default::default()
        };
        let t = make_forecast(&minutes, rng.random_range(0..24), day as u64, &config).expect("forecast");
        for _ in 0..20 {
            let k = rng.random_range(0..STEPS_PER_DAY);
            let (v, a) = (t.values[k], t.actual[k]);
            if v < 0.7 * a - 1e-12 || v > 1.4 * a + 1e-12 {
                outside += 1;
            }
            sampled += 1;
        }
    }
    let flat = vec![1.0; MINUTES_PER_DAY];
    let n = 4000;
    let bias = (0..n)
        .map(|d| {
            let t = make_forecast(&flat, 0, d, &ForecastConfig::default()).expect("forecast");
            (t.values[STEPS_PER_DAY - 1] - 1.0).abs()
        })
        .sum::<f64>()
        / n as f64;
    vec![
        check(
            "10.envelope",
            outside == 0,
            format!("{sampled} points, {outside} outside [0.7, 1.4] x actual"),
        ),
        check(
            "10.bias",
            (bias - 0.20).abs() <= 0.01,
            format!(
                "mean |error| at the last step of {n} flat days issued at midnight: {:.2} %",
                100.0 * bias
            ),
        ),
    ]
}

fn mpc_handoff() -> Vec<Check> {
    let week = calibration_week(scenario().feeder.clone(), config().seed);
    let at = settings_at(PENETRATION);
    let mut boundaries = 0;
    let mut worst: f64 = 0.0;
    let mut handoff: f64 = 0.0;
    for (pos, day) in week.days.iter().enumerate() {
        let actual = day_problem(&week, pos, &at).expect("day problem");
        let source = ForecastSource::Synthetic {
            pv_minutes: &day.pv_per_kwp,
            day: day_of_year(day.date) as u64,
            config: ForecastConfig {
                seed: config().seed,
                ..Default::default()
            },
        };
        let out = run_hourly(&actual, &source, &at.solver).expect("hourly control");
        for (h, soc) in out.boundary_soc().iter().enumerate() {
            boundaries += 1;
            for (a, b) in soc.iter().zip(&out.hours[h + 1].start_soc) {
                worst = worst.max((a - b).abs());
            }
        }
        handoff = handoff.max(out.handoff_error);
    }
    let expected = 23 * week.days.len();
    vec![check(
        "11.continuity",
        boundaries == expected && worst <= 1e-9 && handoff <= 1e-9,
        format!(
            "{} days, {boundaries}/{expected} boundaries, largest gap {worst:.2e} kWh, handoff {handoff:.2e} kWh",
            week.days.len()
        ),
    )]
}

type Criterion = (usize, &'static str, fn() -> Vec<Check>);

const CRITERIA: [Criterion; 11] = [
    (1, "oracle equivalence", oracle_equivalence),
    (2, "constraint residuals", constraint_residuals),
    (3, "calibration anchors", calibration_anchors),
    (4, "hosting ordering", hosting_ordering),
    (5, "forecast trend", forecast_trend),
    (6, "switching penalty", switching_penalty),
    (7, "grouping monotonicity", grouping),
    (8, "loss trend", loss_trend),
    (9, "power flow", power_flow),
    (10, "forecast envelope", forecast_envelope),
    (11, "mpc handoff", mpc_handoff),
];

fn main() -> ExitCode {
    let strict = std::env::var("PVFLEX_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    let mut failed = 0;
    for (n, name, run) in CRITERIA {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let checks = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            vec![check("panic", false, format!("panicked: {msg}"))]
        });
        let ok = checks.iter().all(|c| c.ok);
        let mut known = true;
        for c in &checks {
            if !c.ok {
                let expected = !strict && KNOWN_FAILURES.contains(&c.key);
                known &= expected;
                unexpected += usize::from(!expected);
            }
        }
        failed += usize::from(!ok);
        let verdict = if ok { "PASS" } else { "FAIL" };
        let note = if !ok && known { " (known)" } else { "" };
        println!(
            "criterion {n:>2} {verdict} {name}{note} [{:.1} s]",
            start.elapsed().as_secs_f64()
        );
        for c in &checks {
            println!("    {} {:<16} {}", if c.ok { "ok  " } else { "FAIL" }, c.key, c.detail);
        }
    }
    println!("{failed} criteria failing, {unexpected} unexpected sub-check failures");
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
