//! Dispatch of electric water heaters and PV curtailment on a low-voltage
//! feeder, with minute-level power-flow verification.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: feeder model, backward/forward sweep and minute simulator.
//! - [`assets`]: water heaters, draw profiles, PV and load generators.
//! - [`forecast`]: synthetic PV forecasts with lead-time dependent error.
//! - [`dispatch`]: the mixed-integer dispatch model and its solvers.
//! - [`mpc`]: hourly receding-horizon control and the day-ahead baseline.
//! - [`scenario`]: data ingestion, costing, hosting capacity and sweeps.

pub mod assets;
pub mod dispatch;
pub mod error;
pub mod forecast;
pub mod grid;
pub mod mpc;
pub mod scenario;
mod seed;

pub use error::{Error, ErrorClass, Result};
