use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STEPS_PER_DAY: usize = 144;
pub const DAILY_HOT_WATER_KWH: f64 = 1.03;

/// Share of the daily hot-water energy drawn in each 10-minute step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawProfile {
    weights: Vec<f64>,
    pub daily_demand_per_household: f64,
}

impl DrawProfile {
    /// Normalizes `raw` to sum to one.
    pub fn from_weights(raw: &[f64], daily_demand_per_household: f64) -> Result<Self> {
        if raw.len() != STEPS_PER_DAY {
            return Err(Error::InvalidInput(format!(
                "draw profile needs {STEPS_PER_DAY} weights, got {}",
                raw.len()
            )));
        }
        if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput(
                "draw weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("draw weights sum to zero".into()));
        }
        if !(daily_demand_per_household >= 0.0) {
            return Err(Error::InvalidInput("daily demand must be non-negative".into()));
        }
        Ok(DrawProfile {
            weights: raw.iter().map(|w| w / total).collect(),
            daily_demand_per_household,
        })
    }

    pub fn uniform(daily_demand_per_household: f64) -> Self {
        Self::from_weights(&[1.0; STEPS_PER_DAY], daily_demand_per_household).expect("uniform is valid")
    }

    /// Morning and evening peaks with a small midday bump and almost no
    /// use between midnight and five.
    pub fn two_peak() -> Self {
        let bump = |hour: f64, centre: f64, width: f64| (-0.5 * ((hour - centre) / width).powi(2)).exp();
        let raw: Vec<f64> = (0..STEPS_PER_DAY)
            .map(|k| {
                let hour = (k as f64 + 0.5) / 6.0;
                let night = if (0.5..5.0).contains(&hour) { 0.01 } else { 0.06 };
                night + 1.0 * bump(hour, 7.0, 0.9) + 0.35 * bump(hour, 12.5, 1.0) + 0.8 * bump(hour, 19.5, 1.6)
            })
            .collect();
        Self::from_weights(&raw, DAILY_HOT_WATER_KWH).expect("shape is valid")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Energy drawn in `step` by `households`, in kWh.
    pub fn draw_at(&self, step: usize, households: u32) -> f64 {
        self.weights[step % STEPS_PER_DAY] * self.daily_demand_per_household * households as f64
    }

    pub fn day(&self, households: u32) -> Vec<f64> {
        (0..STEPS_PER_DAY).map(|k| self.draw_at(k, households)).collect()
    }
}

impl Default for DrawProfile {
    fn default() -> Self {
        Self::two_peak()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_split() {
        let p = DrawProfile::uniform(DAILY_HOT_WATER_KWH);
        for k in [0, 71, 143] {
            assert!((p.draw_at(k, 10) - 10.3 / 144.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_day_total() {
        let p = DrawProfile::default();
        let total: f64 = p.day(10).iter().sum();
        assert!((total - 10.3).abs() < 1e-9, "{total}");
        assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let peak = p.weights().iter().cloned().fold(0.0, f64::max);
        assert!(peak > 3.0 / 144.0);
    }

    #[test]
    fn zero_weight_step_draws_nothing() {
        let mut raw = vec![1.0; STEPS_PER_DAY];
        raw[5] = 0.0;
        let p = DrawProfile::from_weights(&raw, 1.03).unwrap();
        assert_eq!(p.draw_at(5, 10), 0.0);
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(DrawProfile::from_weights(&[1.0; 10], 1.03).is_err());
        let mut raw = vec![1.0; STEPS_PER_DAY];
        raw[0] = -1.0;
        assert!(DrawProfile::from_weights(&raw, 1.03).is_err());
        assert!(DrawProfile::from_weights(&[0.0; STEPS_PER_DAY], 1.03).is_err());
    }

    proptest! {
        #[test]
        fn day_total_independent_of_shape(raw in proptest::collection::vec(0.0f64..5.0, STEPS_PER_DAY),
                                          demand in 0.1f64..3.0, households in 1u32..30) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-6);
            let p = DrawProfile::from_weights(&raw, demand).unwrap();
            let total: f64 = p.day(households).iter().sum();
            prop_assert!((total - demand * households as f64).abs() < 1e-9 * (1.0 + total));
        }
    }
}
