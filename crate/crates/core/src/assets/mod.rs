//! Water heaters, hot-water draws, PV plants and passive load profiles.

mod draw;
mod ewh;
mod load;
mod pv;
mod series;

pub use draw::{DrawProfile, DAILY_HOT_WATER_KWH, STEPS_PER_DAY};
pub use ewh::{default_fleet, soc_step, Ewh, SocStep, DEFAULT_EWH_KW, DEFAULT_SOC_MAX_KWH, INITIAL_SOC_RANGE};
pub use load::{
    synth_load_profile, LoadModel, HOUSEHOLD_CONSUMPTION_KWH, LOAD_POWER_FACTOR, PASSIVE_KWH_PER_HOUSEHOLD,
};
pub use pv::{synth_pv_profile, PvModel, PvPlant, DAYS_PER_YEAR, DEFAULT_CAPACITY_FACTOR, DEFAULT_YEAR};
pub use series::{block_means, TimeSeries, MINUTES_PER_DAY};
