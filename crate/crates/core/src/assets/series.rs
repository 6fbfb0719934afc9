use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: usize = 1440;

/// Regularly sampled power values in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub start: NaiveDateTime,
    pub resolution_minutes: u32,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: NaiveDateTime, resolution_minutes: u32, values: Vec<f64>) -> Result<Self> {
        if resolution_minutes == 0 || (10 % resolution_minutes != 0 && resolution_minutes != 10) {
            return Err(Error::InvalidInput(format!(
                "resolution {resolution_minutes} min must divide 10 minutes"
            )));
        }
        Ok(TimeSeries {
            start,
            resolution_minutes,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hours_per_step(&self) -> f64 {
        self.resolution_minutes as f64 / 60.0
    }

    pub fn energy_kwh(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.hours_per_step()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn timestamp(&self, idx: usize) -> NaiveDateTime {
        self.start + Duration::minutes(idx as i64 * self.resolution_minutes as i64)
    }

    /// Block averages over `minutes`-long windows.
    pub fn resample_mean(&self, minutes: u32) -> Result<TimeSeries> {
        if minutes % self.resolution_minutes != 0 {
            return Err(Error::InvalidInput(format!(
                "cannot resample {} min data to {minutes} min",
                self.resolution_minutes
            )));
        }
        let factor = (minutes / self.resolution_minutes) as usize;
        Ok(TimeSeries {
            start: self.start,
            resolution_minutes: minutes,
            values: block_means(&self.values, factor),
        })
    }

    /// The values of calendar day `date`, if fully covered.
    pub fn day_slice(&self, date: NaiveDate) -> Option<&[f64]> {
        let offset = (date.and_hms_opt(0, 0, 0)? - self.start).num_minutes();
        if offset < 0 || offset % self.resolution_minutes as i64 != 0 {
            return None;
        }
        let first = (offset / self.resolution_minutes as i64) as usize;
        let per_day = MINUTES_PER_DAY / self.resolution_minutes as usize;
        self.values.get(first..first + per_day)
    }
}

pub fn block_means(values: &[f64], factor: usize) -> Vec<f64> {
    values
        .chunks(factor)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}
