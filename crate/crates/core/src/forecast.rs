//! Synthetic PV forecasts with a lead-time dependent error.
//!
//! A forecast issued at hour `t` covers the whole day on the 10-minute
//! dispatch grid. Steps before the issue time carry only small measurement
//! noise. Later steps multiply the smoothed actual curve by a random error
//! factor whose mean drifts linearly with lead time, so a forecast made at
//! midnight is systematically off by up to 20 % by the end of the day.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assets::{block_means, MINUTES_PER_DAY, STEPS_PER_DAY};
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const STEP_MINUTES: usize = MINUTES_PER_DAY / STEPS_PER_DAY;
pub const DEFAULT_SMOOTHING_MINUTES: usize = 30;

/// How the intraday mean error is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanErrorMode {
    /// The error has a signed mean drawn once per day (a biased forecast).
    #[default]
    Biased,
    /// Zero-mean error whose mean absolute value follows the ramp.
    ZeroMeanAbsolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    pub max_intraday_mean: f64,
    pub max_over: f64,
    pub max_under: f64,
    pub noise_std: f64,
    pub smoothing_minutes: usize,
    pub mode: MeanErrorMode,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            max_intraday_mean: 0.20,
            max_over: 0.40,
            max_under: 0.30,
            noise_std: 0.02,
            smoothing_minutes: DEFAULT_SMOOTHING_MINUTES,
            mode: MeanErrorMode::Biased,
            seed: 0,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_intraday_mean >= 0.0
            && self.max_intraday_mean <= self.max_over
            && self.max_under >= 0.0
            && self.max_under < 1.0
            && self.noise_std >= 0.0
            && self.smoothing_minutes >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid forecast config {self:?}")))
        }
    }

    /// Mean of the error at `lead` steps after issue, before the sign.
    pub fn mean_at_lead(&self, lead: usize) -> f64 {
        self.max_intraday_mean * lead as f64 / (STEPS_PER_DAY - 1) as f64
    }

    /// Standard deviation of the error for a signed mean `mu`: the 3-sigma
    /// band stays inside the over/under envelope.
    pub fn sigma_for(&self, mu: f64) -> f64 {
        ((self.max_over - mu) / 3.0).min((self.max_under + mu) / 3.0).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTrace {
    pub issue_hour: usize,
    pub issue_step: usize,
    /// Actual 10-minute mean PV, kW.
    pub actual: Vec<f64>,
    /// Forecast 10-minute mean PV for the whole day, kW.
    pub values: Vec<f64>,
    /// Multiplier applied to the smoothed curve (future steps) or to the
    /// actual value (past steps).
    pub error_factors: Vec<f64>,
}

impl ForecastTrace {
    /// Forecast from the issue step to midnight.
    pub fn horizon(&self) -> &[f64] {
        &self.values[self.issue_step..]
    }

    /// A trace identical to the actuals.
    pub fn perfect(actual_minutes: &[f64], issue_hour: usize) -> Result<Self> {
        check_day(actual_minutes, issue_hour)?;
        let actual = block_means(actual_minutes, STEP_MINUTES);
        Ok(ForecastTrace {
            issue_hour,
            issue_step: issue_hour * 6,
            values: actual.clone(),
            actual,
            error_factors: vec![1.0; STEPS_PER_DAY],
        })
    }
}

/// Centred moving average over `window` minutes (truncated at the day
/// edges), then 10-minute means.
pub fn smooth(actual_minutes: &[f64], window: usize) -> Vec<f64> {
    let n = actual_minutes.len();
    let half = window / 2;
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in actual_minutes.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let averaged: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    block_means(&averaged, STEP_MINUTES)
}

fn check_day(actual_minutes: &[f64], issue_hour: usize) -> Result<()> {
    if actual_minutes.len() != MINUTES_PER_DAY {
        return Err(Error::InvalidInput(format!(
            "forecast needs {MINUTES_PER_DAY} minutes of actuals, got {}",
            actual_minutes.len()
        )));
    }
    if issue_hour >= 24 {
        return Err(Error::InvalidInput(format!("issue hour {issue_hour} outside the day")));
    }
    Ok(())
}

/// Forecast of one day's PV issued at `issue_hour`.
///
/// `day` selects the random stream together with `config.seed`; the sign
/// of the systematic error depends only on those two, so all hourly
/// updates of one day err in the same direction.
pub fn make_forecast(
    actual_minutes: &[f64],
    issue_hour: usize,
    day: u64,
    config: &ForecastConfig,
) -> Result<ForecastTrace> {
    check_day(actual_minutes, issue_hour)?;
    config.validate()?;
    let actual = block_means(actual_minutes, STEP_MINUTES);
    let smoothed = smooth(actual_minutes, config.smoothing_minutes);
    let issue_step = issue_hour * 6;

    let mut sign_rng: ChaCha8Rng = rng_for(config.seed, &[0xf0_0000, day]);
    let sign = if sign_rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut rng: ChaCha8Rng = rng_for(config.seed, &[0xf0_0001, day, issue_hour as u64]);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (lo, hi) = (1.0 - config.max_under, 1.0 + config.max_over);

    let mut values = Vec::with_capacity(STEPS_PER_DAY);
    let mut error_factors = Vec::with_capacity(STEPS_PER_DAY);
    for k in 0..STEPS_PER_DAY {
        let z = unit.sample(&mut rng);
        let (base, factor) = if k < issue_step {
            let noise = (config.noise_std * z).clamp(-3.0 * config.noise_std, 3.0 * config.noise_std);
            (actual[k], 1.0 + noise)
        } else {
            let ramp = config.mean_at_lead(k - issue_step);
            let e = match config.mode {
                MeanErrorMode::Biased => {
                    let mu = sign * ramp;
                    mu + config.sigma_for(mu) * z
                }
                MeanErrorMode::ZeroMeanAbsolute => {
                    // E|e| = sigma * sqrt(2 / pi) for a centred normal
                    let sigma = ramp * (std::f64::consts::PI / 2.0).sqrt();
                    sigma * z
                }
            };
            (smoothed[k], (1.0 + e).clamp(lo, hi))
        };
        values.push((base * factor).clamp(lo * actual[k], hi * actual[k]));
        error_factors.push(factor);
    }
    Ok(ForecastTrace {
        issue_hour,
        issue_step,
        actual,
        values,
        error_factors,
    })
}

/// Writes `issue_hour,step,actual_kw,forecast_kw` rows.
pub fn write_traces_csv<W: Write>(traces: &[ForecastTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["issue_hour", "step", "actual_kw", "forecast_kw"])?;
    for t in traces {
        for (k, (a, f)) in t.actual.iter().zip(&t.values).enumerate() {
            w.write_record(&[t.issue_hour.to_string(), k.to_string(), a.to_string(), f.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<forecast csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{PvModel, DEFAULT_CAPACITY_FACTOR};

    fn summer_day() -> Vec<f64> {
        PvModel::new(3, DEFAULT_CAPACITY_FACTOR)
            .day(180)
            .iter()
            .map(|p| p * 10.0)
            .collect()
    }

    #[test]
    fn smoothing_constant_and_spike() {
        let c = smooth(&vec![2.5; MINUTES_PER_DAY], 30);
        assert_eq!(c.len(), STEPS_PER_DAY);
        assert!(c.iter().all(|v| (v - 2.5).abs() < 1e-12));

        let mut spike = vec![0.0; MINUTES_PER_DAY];
        spike[700] = 30.0;
        let s = smooth(&spike, 30);
        assert!(s.iter().all(|&v| v <= 30.0 / 30.0 + 1e-12));
    }

    #[test]
    fn smoothing_keeps_energy() {
        let day = summer_day();
        let e_actual: f64 = day.iter().sum::<f64>() / 60.0;
        let e_smooth: f64 = smooth(&day, 30).iter().sum::<f64>() / 6.0;
        assert!((e_actual - e_smooth).abs() <= 0.02 * e_actual, "{e_actual} {e_smooth}");
    }

    #[test]
    fn envelope_and_past_noise() {
        let day = summer_day();
        let cfg = ForecastConfig::default();
        for seed in 0..40 {
            let cfg = ForecastConfig { seed, ..cfg.clone() };
            let t = make_forecast(&day, 9, seed, &cfg).unwrap();
            for k in 0..STEPS_PER_DAY {
                let a = t.actual[k];
                assert!(t.values[k] >= 0.7 * a - 1e-12 && t.values[k] <= 1.4 * a + 1e-12);
                if k < t.issue_step {
                    assert!((t.values[k] - a).abs() <= 3.0 * cfg.noise_std * a + 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_seeded() {
        let day = summer_day();
        let cfg = ForecastConfig::default();
        assert_eq!(
            make_forecast(&day, 4, 1, &cfg).unwrap(),
            make_forecast(&day, 4, 1, &cfg).unwrap()
        );
        assert_ne!(
            make_forecast(&day, 4, 1, &cfg).unwrap(),
            make_forecast(&day, 4, 2, &cfg).unwrap()
        );
    }

    #[test]
    fn end_of_day_bias() {
        let flat = vec![1.0; MINUTES_PER_DAY];
        let cfg = ForecastConfig::default();
        let n = 4000;
        let mean_abs: f64 = (0..n)
            .map(|d| (make_forecast(&flat, 0, d, &cfg).unwrap().values[STEPS_PER_DAY - 1] - 1.0).abs())
            .sum::<f64>()
            / n as f64;
        assert!((mean_abs - 0.2).abs() < 0.01, "{mean_abs}");
    }

    #[test]
    fn zero_mean_mode_has_no_bias() {
        let flat = vec![1.0; MINUTES_PER_DAY];
        let cfg = ForecastConfig {
            mode: MeanErrorMode::ZeroMeanAbsolute,
            ..Default::default()
        };
        let n = 4000;
        let errs: Vec<f64> = (0..n)
            .map(|d| make_forecast(&flat, 0, d, &cfg).unwrap().values[70] - 1.0)
            .collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let mean_abs = errs.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((mean_abs - cfg.mean_at_lead(70)).abs() < 0.01, "{mean_abs}");
    }

    #[test]
    fn perfect_trace() {
        let day = summer_day();
        let t = ForecastTrace::perfect(&day, 5).unwrap();
        assert_eq!(t.values, t.actual);
        assert_eq!(t.horizon().len(), STEPS_PER_DAY - 30);
    }

    #[test]
    fn csv_dump() {
        let t = ForecastTrace::perfect(&summer_day(), 0).unwrap();
        let mut buf = Vec::new();
        write_traces_csv(&[t], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("issue_hour,step,actual_kw,forecast_kw\n"));
        assert_eq!(text.lines().count(), STEPS_PER_DAY + 1);
    }
}
