//! Command-line front end. `main` only parses arguments and maps errors to
//! exit codes; everything else lives here so tests can drive it directly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pvflex::dispatch::SolverKind;
use pvflex::forecast::ForecastConfig;
use pvflex::grid::feeder_calibration_report;
use pvflex::mpc::{run_mode, ForecastSource, MpcMode};
use pvflex::scenario::{
    calibrate_backflow_limit, calibration_week, day_of_year, day_problem, ewh_grouping_sweep, forecast_comparison,
    forecast_days, hosting_capacity, penetration_sweep, pv_grouping_sweep, run_all, run_scenario,
    switching_penalty_sweep, Control, HostingMethod, ScenarioConfig, SweepTable,
};
use pvflex::{Error, ErrorClass, Result};

/// Environment variable naming the default output directory.
pub const DATA_DIR_ENV: &str = "PVFLEX_DATA_DIR";
const DEFAULT_OUT: &str = "pvflex-out";

#[derive(Debug, Parser)]
#[command(
    name = "pvflex",
    version,
    about = "Water-heater dispatch and PV curtailment on a low-voltage feeder"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Feeder description (TOML); the calibrated default feeder otherwise.
    #[arg(long, global = true)]
    pub feeder: Option<PathBuf>,
    /// Scenario description (TOML). Flags given here override it.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub solver: Option<SolverArg>,
    /// Relative optimality gap for branch and bound.
    #[arg(long, global = true)]
    pub gap: Option<f64>,
    /// Solver time limit per solve, seconds.
    #[arg(long, global = true)]
    pub time_limit: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Exact,
    Bnb,
    Heuristic,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Exact => SolverKind::Exact,
            SolverArg::Bnb => SolverKind::Bnb,
            SolverArg::Heuristic => SolverKind::Heuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ControlArg {
    Dispatch,
    PriceOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Perfect,
    Hourly,
    DayAhead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Dachcz,
    Correlation,
    Dr,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    All,
    Switching,
    EwhGroups,
    PvGroups,
    Penetration,
    Forecast,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deterministic day-by-day dispatch with minute-level verification.
    RunDet {
        #[arg(long)]
        penetration: Option<f64>,
        #[arg(long, value_enum)]
        control: Option<ControlArg>,
    },
    /// One day under hourly re-planning, day-ahead or perfect information.
    RunMpc {
        #[arg(long)]
        day: NaiveDate,
        #[arg(long, default_value_t = 0)]
        forecast_seed: u64,
        #[arg(long, value_enum, default_value = "hourly")]
        mode: ModeArg,
        #[arg(long)]
        penetration: Option<f64>,
    },
    /// Hosting capacity by one or all methods.
    Hosting {
        #[arg(long, value_enum, default_value = "all")]
        method: MethodArg,
    },
    /// Experiment sweeps, written as CSV tables.
    Sweep {
        #[arg(long, value_enum, default_value = "all")]
        experiment: Experiment,
    },
    /// Feeder impedance check and backflow limit calibration.
    Calibrate {
        /// Skip the backflow limit bisection.
        #[arg(long)]
        feeder_only: bool,
    },
    /// Writes the synthetic scenario as CSV files plus the feeder.
    GenData,
}

/// Process exit code for an error.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Io => 3,
        ErrorClass::SolverLimit => 4,
        ErrorClass::Other => 1,
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    class: ErrorClass,
    exit_code: i32,
    message: &'a str,
}

/// The machine-readable error line printed on failure.
pub fn error_json(class: ErrorClass, message: &str) -> String {
    serde_json::json!({
        "error": ErrorReport {
            class,
            exit_code: exit_code(class),
            message,
        }
    })
    .to_string()
}

/// The scenario file (if any) with the command-line overrides applied.
pub fn resolve_config(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.scenario {
        Some(path) => ScenarioConfig::from_file(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(f) = &common.feeder {
        cfg.feeder = Some(f.clone());
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    for solver in [&mut cfg.solver, &mut cfg.hosting.solver, &mut cfg.calibration.solver] {
        if let Some(kind) = common.solver {
            solver.kind = kind.into();
        }
        if let Some(gap) = common.gap {
            solver.gap_tol = gap;
        }
        if common.time_limit.is_some() {
            solver.time_limit = common.time_limit;
        }
    }
    if let Some(gap) = common.gap.filter(|g| !(*g >= 0.0)) {
        return Err(arg_error("gap", format!("must be non-negative, got {gap}")));
    }
    if let Some(t) = common.time_limit.filter(|t| !(*t > 0.0)) {
        return Err(arg_error("time-limit", format!("must be positive, got {t}")));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn arg_error(field: &str, message: String) -> Error {
    Error::ScenarioConfig {
        field: field.into(),
        message,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_table(path: &Path, table: &SweepTable) -> Result<()> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write_file(path, &buf)
}

/// Runs one command, writing artifacts under the output directory and a
/// human-readable summary to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    let out = &cli.common.out;
    let say = |stdout: &mut dyn Write, line: String| -> Result<()> {
        writeln!(stdout, "{line}").map_err(|e| Error::io("stdout", e))
    };
    match &cli.command {
        Command::RunDet { penetration, control } => {
            let mut settings = cfg.run_settings();
            if let Some(p) = penetration {
                settings.penetration = *p;
            }
            if let Some(c) = control {
                settings.control = match c {
                    ControlArg::Dispatch => Control::Dispatch,
                    ControlArg::PriceOnly => Control::PriceOnly,
                };
            }
            if !(settings.penetration >= 0.0 && settings.penetration.is_finite()) {
                return Err(arg_error(
                    "penetration",
                    "must be a finite non-negative fraction".into(),
                ));
            }
            let scenario = cfg.scenario()?;
            let (result, days) = run_scenario(&scenario, &settings)?;
            let dir = out.join("run-det");
            create_dir(&dir)?;
            write_json(&dir.join("summary.json"), &result)?;
            let mut table = String::from(
                "date,weight,shed_kwh,planned_shed_kwh,total_cost,total_with_penalty,switches,losses_kwh,peak_rise,violation_minutes\n",
            );
            for d in &days {
                let r = &d.report;
                table += &format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    d.date,
                    d.weight,
                    r.shed_energy,
                    r.planned_shed,
                    r.total_cost,
                    r.total_with_penalty,
                    r.switch_count,
                    r.losses,
                    d.sim.peak_rise(),
                    d.sim.violation_minutes
                );
            }
            write_file(&dir.join("days.csv"), table.as_bytes())?;
            let r = &result.report;
            say(
                stdout,
                format!(
                    "{} days at {:.1} % penetration: shed {:.3} kWh, cost {:.2}, losses {:.1} kWh, peak rise {:.3} %",
                    days.len(),
                    100.0 * settings.penetration,
                    r.shed_energy,
                    r.total_cost,
                    r.losses,
                    result.peak_rise
                ),
            )?;
        }
        Command::RunMpc {
            day,
            forecast_seed,
            mode,
            penetration,
        } => {
            let mut settings = cfg.run_settings();
            if let Some(p) = penetration {
                settings.penetration = *p;
            }
            let scenario = cfg.day_scenario(*day)?;
            let actual = day_problem(&scenario, 0, &settings)?;
            let source = ForecastSource::Synthetic {
                pv_minutes: &scenario.days[0].pv_per_kwp,
                day: day_of_year(*day) as u64,
                config: ForecastConfig {
                    seed: *forecast_seed,
                    ..cfg.forecast.clone()
                },
            };
            let mode = match mode {
                ModeArg::Perfect => MpcMode::Perfect,
                ModeArg::Hourly => MpcMode::Hourly,
                ModeArg::DayAhead => MpcMode::DayAhead,
            };
            let outcome = run_mode(mode, &actual, &source, &settings.solver)?;
            let dir = out.join("run-mpc");
            create_dir(&dir)?;
            let stem = format!("{day}-{}", serde_json::to_value(mode)?.as_str().unwrap_or("mode"));
            write_json(&dir.join(format!("{stem}.json")), &outcome)?;
            let mut table = String::from("step,shed_kw,heaters_on\n");
            let sol = &outcome.realized.solution;
            for k in 0..actual.steps {
                let on = sol.b.iter().filter(|row| row[k]).count();
                table += &format!("{k},{},{on}\n", sol.shed_at(k));
            }
            write_file(&dir.join(format!("{stem}.csv")), table.as_bytes())?;
            say(
                stdout,
                format!(
                    "{day} {mode:?}: shed {:.3} kWh, cost {:.4}, handoff error {:.1e}",
                    outcome.shed_kwh(actual.dt),
                    outcome.cost(),
                    outcome.handoff_error
                ),
            )?;
        }
        Command::Hosting { method } => {
            let methods = match method {
                MethodArg::Dachcz => vec![HostingMethod::Dachcz],
                MethodArg::Correlation => vec![HostingMethod::Correlation],
                MethodArg::Dr => vec![HostingMethod::Dr],
                MethodArg::All => vec![HostingMethod::Dachcz, HostingMethod::Correlation, HostingMethod::Dr],
            };
            let scenario = cfg.scenario()?;
            let mut results = Vec::new();
            for m in methods {
                let r = hosting_capacity(&scenario, m, &cfg.hosting)?;
                say(
                    stdout,
                    format!(
                        "{:<12} {:6.2} % ({:.3} kWp/household){}",
                        serde_json::to_value(m)?.as_str().unwrap_or(""),
                        100.0 * r.penetration,
                        r.kwp_per_household,
                        if r.capped { ", capped" } else { "" }
                    ),
                )?;
                results.push(r);
            }
            create_dir(out)?;
            write_json(&out.join("hosting.json"), &results)?;
        }
        Command::Sweep { experiment } => {
            let scenario = cfg.scenario()?;
            let settings = cfg.run_settings();
            let opts = &cfg.sweep;
            let at = pvflex::scenario::RunSettings {
                penetration: opts.penetration,
                ..settings.clone()
            };
            let dir = out.join("sweep");
            create_dir(&dir)?;
            let forecast = || -> Result<_> {
                let days = forecast_days(scenario.feeder.clone(), scenario.seed, opts.forecast_days)?;
                forecast_comparison(&days, &at, &opts.forecast)
            };
            let table = match experiment {
                Experiment::All => {
                    let (table, fc) = run_all(&scenario, &settings, opts)?;
                    write_json(&dir.join("forecast.json"), &fc)?;
                    table
                }
                Experiment::Switching => switching_penalty_sweep(&scenario, &at, &opts.switch_costs),
                Experiment::EwhGroups => ewh_grouping_sweep(&scenario, &at, &opts.ewh_groups),
                Experiment::PvGroups => pv_grouping_sweep(&scenario, &at, &opts.pv_groups),
                Experiment::Penetration => penetration_sweep(&scenario, &settings, &opts.penetrations),
                Experiment::Forecast => {
                    let fc = forecast()?;
                    write_json(&dir.join("forecast.json"), &fc)?;
                    fc.to_table()
                }
            };
            for name in [
                "switching-penalty",
                "ewh-grouping",
                "pv-grouping",
                "penetration",
                "forecast",
            ] {
                let part = SweepTable {
                    rows: table.experiment(name).cloned().collect(),
                };
                if !part.rows.is_empty() {
                    write_table(&dir.join(format!("{name}.csv")), &part)?;
                }
            }
            let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
            say(
                stdout,
                format!(
                    "{} rows written to {} ({failed} failed points)",
                    table.rows.len(),
                    dir.display()
                ),
            )?;
        }
        Command::Calibrate { feeder_only } => {
            let report = feeder_calibration_report()?;
            say(
                stdout,
                format!(
                    "impedance scale {:.6} (stored {:.6}), rise at the reference PV {:.4} %, min voltage at peak {:.4} p.u.",
                    report.impedance_scale, report.stored_scale, report.dachcz_rise_percent, report.peak_min_voltage
                ),
            )?;
            create_dir(out)?;
            write_json(&out.join("feeder-calibration.json"), &report)?;
            if !feeder_only {
                let week = calibration_week(cfg.feeder_model()?, cfg.seed);
                let c = calibrate_backflow_limit(&week, &cfg.calibration)?;
                say(
                    stdout,
                    format!(
                        "backflow limit {:.3} kW (peak rise {:.4} %, {} runs{})",
                        c.p_min,
                        c.peak_rise,
                        c.evaluations,
                        if c.capped { ", capped" } else { "" }
                    ),
                )?;
                write_json(&out.join("backflow-calibration.json"), &c)?;
            }
        }
        Command::GenData => {
            let scenario = cfg.scenario()?;
            let dir = out.join("data");
            create_dir(&dir)?;
            let (series, spot) = (dir.join("series.csv"), dir.join("spot.csv"));
            scenario.write_csv(&series, &spot)?;
            write_file(&dir.join("feeder.toml"), scenario.feeder.to_toml_string().as_bytes())?;
            say(
                stdout,
                format!("{} days written to {}", scenario.days.len(), dir.display()),
            )?;
        }
    }
    Ok(())
}
