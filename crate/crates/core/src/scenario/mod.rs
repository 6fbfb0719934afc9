//! Data ingestion, cost accounting, hosting capacity and experiment sweeps.

mod calibrate;
mod config;
mod cost;
mod data;
mod hosting;
mod run;
mod sweep;

pub use calibrate::{
    calibrate_backflow_limit, calibration_week, BackflowCalibration, BackflowOptions, CALIBRATION_SEED,
    CALIBRATION_WEEK_START,
};
pub use config::{DaysConfig, FullYear, ScenarioConfig, DEFAULT_SEED};
pub use cost::{price_outcome, shed_compensation, CostReport};
pub use data::{
    day_of_year, ingest_bus_csv, ingest_bus_csv_str, ingest_csv, ingest_csv_str, ingest_spot_csv, ingest_spot_str,
    synth_spot_day, BusColumns, DayData, DaySelection, IngestedDay, IngestedSeries, ScenarioData, BUS_CSV_HEADER,
    MAX_GAP_MINUTES, PV_REFERENCE_KWP_PER_HOUSEHOLD, REPRESENTATIVE_DAYS,
};
pub use hosting::{check_penetration, hosting_capacity, HostingCheck, HostingMethod, HostingOptions, HostingResult};
pub use run::{
    day_fleet, day_inputs, day_plants, day_problem, finish_day, heater_schedule, plan_day, price_only_problem, run_day,
    run_scenario, verify_day, Control, DayResult, DaySummary, RunSettings, ScenarioResult,
};
pub use sweep::{
    ewh_grouping_sweep, forecast_comparison, forecast_days, paired_t_test, penetration_sweep, pv_grouping_sweep,
    run_all, switching_penalty_sweep, ForecastComparison, ForecastDay, PairedTest, SweepOptions, SweepRow, SweepTable,
    FORECAST_MODES,
};
