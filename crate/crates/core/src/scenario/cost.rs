use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::dispatch::{DispatchProblem, DispatchSolution, DEFAULT_SHED_COST};

/// Money and energy accounting of one or more simulated days, EUR and kWh.
///
/// `total_cost` is the money actually spent: passive and water-heating
/// energy at spot prices plus shed compensation. The switching penalty is
/// a virtual cost of the optimizer and only enters `total_with_penalty`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub days: f64,
    pub heaters: usize,
    pub passive_cost: f64,
    pub charging_cost: f64,
    /// Curtailed energy at minute resolution, as applied to the plants.
    pub shed_energy: f64,
    /// Shed of the 10-minute plan.
    pub planned_shed: f64,
    pub shed_cost: f64,
    /// On and off actions summed over individual heaters.
    pub switch_count: f64,
    pub switching_penalty: f64,
    pub total_cost: f64,
    pub total_with_penalty: f64,
    pub losses: f64,
    /// Energy consumed by loads and heaters.
    pub consumed: f64,
    pub pv_delivered: f64,
    pub imported: f64,
    pub exported: f64,
    pub violation_minutes: f64,
}

impl CostReport {
    pub fn energy_cost(&self) -> f64 {
        self.passive_cost + self.charging_cost
    }

    pub fn switches_per_heater_day(&self) -> f64 {
        if self.days <= 0.0 || self.heaters == 0 {
            return 0.0;
        }
        self.switch_count / (self.days * self.heaters as f64)
    }

    /// Feeder losses as a share of the energy delivered to consumers.
    pub fn loss_fraction(&self) -> f64 {
        if self.consumed <= 0.0 {
            return 0.0;
        }
        self.losses / self.consumed
    }

    /// Every extensive quantity multiplied by `w` (a day standing for `w` days).
    pub fn scaled(&self, w: f64) -> CostReport {
        CostReport {
            days: self.days * w,
            heaters: self.heaters,
            passive_cost: self.passive_cost * w,
            charging_cost: self.charging_cost * w,
            shed_energy: self.shed_energy * w,
            planned_shed: self.planned_shed * w,
            shed_cost: self.shed_cost * w,
            switch_count: self.switch_count * w,
            switching_penalty: self.switching_penalty * w,
            total_cost: self.total_cost * w,
            total_with_penalty: self.total_with_penalty * w,
            losses: self.losses * w,
            consumed: self.consumed * w,
            pv_delivered: self.pv_delivered * w,
            imported: self.imported * w,
            exported: self.exported * w,
            violation_minutes: self.violation_minutes * w,
        }
    }
}

impl AddAssign<&CostReport> for CostReport {
    fn add_assign(&mut self, o: &CostReport) {
        self.days += o.days;
        self.heaters = self.heaters.max(o.heaters);
        self.passive_cost += o.passive_cost;
        self.charging_cost += o.charging_cost;
        self.shed_energy += o.shed_energy;
        self.planned_shed += o.planned_shed;
        self.shed_cost += o.shed_cost;
        self.switch_count += o.switch_count;
        self.switching_penalty += o.switching_penalty;
        self.total_cost += o.total_cost;
        self.total_with_penalty += o.total_with_penalty;
        self.losses += o.losses;
        self.consumed += o.consumed;
        self.pv_delivered += o.pv_delivered;
        self.imported += o.imported;
        self.exported += o.exported;
        self.violation_minutes += o.violation_minutes;
    }
}

impl Add for CostReport {
    type Output = CostReport;

    fn add(mut self, o: CostReport) -> CostReport {
        self += &o;
        self
    }
}

impl<'a> std::iter::Sum<&'a CostReport> for CostReport {
    fn sum<I: Iterator<Item = &'a CostReport>>(iter: I) -> CostReport {
        iter.fold(CostReport::default(), |mut acc, r| {
            acc += r;
            acc
        })
    }
}

/// Prices one day: heater energy and passive load at the step spot price,
/// `shed_kwh` of curtailment at the compensation rate, and switching
/// counted per heater. Grid quantities are left at zero.
pub fn price_outcome(p: &DispatchProblem, sol: &DispatchSolution, shed_kwh: f64) -> CostReport {
    let mut charging = 0.0;
    for (g, row) in p.ewh_groups.iter().zip(&sol.b) {
        for k in 0..p.steps {
            if row[k] {
                charging += p.spot[k] * g.rating * p.dt;
            }
        }
    }
    let passive: f64 = (0..p.steps).map(|k| p.spot[k] * p.baseline_load[k] * p.dt).sum();
    let mut group_actions = 0.0;
    let mut heater_actions = 0.0;
    for (i, g) in p.ewh_groups.iter().enumerate() {
        let a: f64 = sol.s_on[i].iter().chain(&sol.s_off[i]).sum();
        group_actions += a;
        heater_actions += a * g.members.len() as f64;
    }
    let shed_cost = shed_kwh * p.shed_cost;
    let total = passive + charging + shed_cost;
    let penalty = p.switch_cost * group_actions;
    CostReport {
        days: 1.0,
        heaters: p.ewh_groups.iter().map(|g| g.members.len()).sum(),
        passive_cost: passive,
        charging_cost: charging,
        shed_energy: shed_kwh,
        planned_shed: sol.shed_kwh(p.dt),
        shed_cost,
        switch_count: heater_actions,
        switching_penalty: penalty,
        total_cost: total,
        total_with_penalty: total + penalty,
        ..Default::default()
    }
}

/// Compensation owed for `shed_kwh` at the default rate.
pub fn shed_compensation(shed_kwh: f64) -> f64 {
    shed_kwh * DEFAULT_SHED_COST
}
