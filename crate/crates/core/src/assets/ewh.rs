use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const DEFAULT_EWH_KW: f64 = 4.5;
/// 4.5 kW for four hours.
pub const DEFAULT_SOC_MAX_KWH: f64 = 18.0;
pub const INITIAL_SOC_RANGE: (f64, f64) = (0.25, 0.75);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ewh {
    pub id: usize,
    pub bus: usize,
    pub power_rating: f64,
    pub soc: f64,
    pub soc_max: f64,
    pub households: u32,
    pub group: usize,
}

impl Ewh {
    pub fn new(id: usize, bus: usize, power_rating: f64, soc: f64, soc_max: f64, households: u32) -> Result<Self> {
        if !(power_rating > 0.0) {
            return Err(Error::InvalidInput(format!(
                "water heater {id}: rating must be positive"
            )));
        }
        if !(soc_max > 0.0) || !(0.0..=soc_max).contains(&soc) {
            return Err(Error::InvalidInput(format!(
                "water heater {id}: need 0 <= soc ({soc}) <= soc_max ({soc_max})"
            )));
        }
        Ok(Ewh {
            id,
            bus,
            power_rating,
            soc,
            soc_max,
            households,
            group: id,
        })
    }
}

/// Outcome of one storage update before any clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocStep {
    pub soc: f64,
    pub unmet_demand: bool,
}

impl SocStep {
    /// State the simulator carries forward: never below empty.
    pub fn clamped(&self) -> f64 {
        self.soc.max(0.0)
    }
}

/// `soc + rating * on * dt - draw`, evaluated in that order.
///
/// The dispatch checker and the simulator both use this function so that
/// replaying a schedule reproduces the optimizer's trajectory bit for bit.
pub fn soc_step(soc: f64, power_rating: f64, on: bool, dt: f64, draw: f64) -> SocStep {
    let charge = if on { power_rating * dt } else { 0.0 };
    let next = soc + charge - draw;
    SocStep {
        soc: next,
        unmet_demand: next < 0.0,
    }
}

impl Ewh {
    pub fn step(&self, on: bool, dt: f64, draw: f64) -> SocStep {
        soc_step(self.soc, self.power_rating, on, dt, draw)
    }
}

/// One water heater per load bus with a seeded random initial charge.
pub fn default_fleet(load_buses: &[(usize, u32)], seed: u64) -> Vec<Ewh> {
    let mut rng: ChaCha8Rng = rng_for(seed, &[0x0e_0000]);
    load_buses
        .iter()
        .enumerate()
        .map(|(id, &(bus, households))| {
            let frac = rng.random_range(INITIAL_SOC_RANGE.0..=INITIAL_SOC_RANGE.1);
            Ewh::new(
                id,
                bus,
                DEFAULT_EWH_KW,
                frac * DEFAULT_SOC_MAX_KWH,
                DEFAULT_SOC_MAX_KWH,
                households,
            )
            .expect("defaults are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charging_step() {
        let s = soc_step(5.0, 4.5, true, 1.0 / 6.0, 0.2);
        assert!((s.soc - 5.55).abs() < 1e-12);
        assert!(!s.unmet_demand);
    }

    #[test]
    fn idle_step_is_identity() {
        assert_eq!(soc_step(5.0, 4.5, false, 1.0 / 6.0, 0.0).soc, 5.0);
    }

    #[test]
    fn overdraw_is_flagged_not_hidden() {
        let s = soc_step(0.1, 4.5, false, 1.0 / 6.0, 0.2);
        assert!(s.unmet_demand);
        assert!((s.soc + 0.1).abs() < 1e-12);
        assert_eq!(s.clamped(), 0.0);
    }

    #[test]
    fn fleet_defaults() {
        let buses: Vec<(usize, u32)> = (1..=20).map(|b| (b, 10)).collect();
        let fleet = default_fleet(&buses, 3);
        assert_eq!(fleet.len(), 20);
        let flexible: f64 = fleet.iter().map(|e| e.soc_max).sum();
        assert_eq!(flexible, 360.0);
        assert!(fleet.iter().all(|e| (e.power_rating * 4.0 - e.soc_max).abs() < 1e-12));
        assert!(fleet.iter().all(|e| e.soc >= 4.5 && e.soc <= 13.5));
        assert_eq!(fleet, default_fleet(&buses, 3));
        assert_ne!(fleet, default_fleet(&buses, 4));
    }

    #[test]
    fn rejects_invalid() {
        assert!(Ewh::new(0, 1, 0.0, 1.0, 18.0, 10).is_err());
        assert!(Ewh::new(0, 1, 4.5, 19.0, 18.0, 10).is_err());
    }
}
