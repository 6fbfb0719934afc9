//! Radial LV feeder model, backward/forward sweep power flow and the
//! minute-resolution verification loop.

mod calibrate;
mod flow;
mod model;
mod sim;

pub use calibrate::{
    base_layout, calibrate_impedance_scale, dachcz_kwp_per_household, dachcz_loads, dachcz_rise, default_feeder,
    feeder_calibration_report, peak_loads, peak_min_voltage, FeederCalibrationReport, DACHCZ_KWP_PER_HOUSEHOLD,
    DEFAULT_IMPEDANCE_SCALE, DEFAULT_P_MIN_KW, HOUSEHOLDS_PER_BUS, MIN_PEAK_VOLTAGE, PEAK_LOAD_KVA, PEAK_POWER_FACTOR,
};
pub use flow::{
    max_voltage_rise, solve_power_flow, BusLoad, LineFlow, PowerFlowSolution, SweepWorkspace, SWEEP_MAX_ITERATIONS,
    SWEEP_TOLERANCE,
};
pub use model::{Bus, BusConfig, FeederConfig, FeederModel, Line, LineConfig, BASE_KVA};
pub use sim::{first_violation, simulate_minutes, BusSchedule, MinuteSeries, MinuteSimResult, VOLTAGE_RISE_LIMIT};
