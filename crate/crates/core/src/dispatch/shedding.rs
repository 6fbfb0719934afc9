use serde::Serialize;

use super::problem::{DispatchProblem, FEAS_TOL};
use super::solution::DispatchSolution;
use crate::error::{Error, Result};

/// Exhaustive cover search up to this many switchable units.
const EXACT_COVER_UNITS: usize = 16;

/// Minute-level curtailment derived from a planned shed.
#[derive(Debug, Clone, Serialize)]
pub struct Curtailment {
    /// Curtailed power per plant and minute, kW.
    pub plant_kw: Vec<Vec<f64>>,
    pub planned_kwh: f64,
    pub realized_kwh: f64,
    /// Steps where the plan asked for more than the plants produced.
    pub capped_steps: Vec<usize>,
}

impl Curtailment {
    pub fn overshoot_kwh(&self) -> f64 {
        self.realized_kwh - self.planned_kwh
    }
}

/// Turns the per-group shed of `sol` into per-plant minute curtailment.
///
/// `plant_minutes[p]` is the available output of plant `p` (the indices
/// used in the PV groups) over the whole horizon. With `rampable` each
/// group's shed is split over its plants in proportion to their step mean
/// and each plant is capped at its mean minus its share, minute by minute.
/// Otherwise PV groups are switched off whole: the set of groups with the
/// smallest combined output that still covers the step's total shed.
pub fn apply_shedding(
    p: &DispatchProblem,
    sol: &DispatchSolution,
    plant_minutes: &[Vec<f64>],
    rampable: bool,
) -> Result<Curtailment> {
    let n_plants = plant_minutes.len();
    let minutes = plant_minutes.first().map_or(0, Vec::len);
    if minutes % p.steps != 0 || plant_minutes.iter().any(|r| r.len() != minutes) {
        return Err(Error::InvalidInput(format!(
            "plant series of {minutes} minutes do not split into {} steps",
            p.steps
        )));
    }
    if p.pv_groups.iter().flat_map(|g| &g.plants).any(|&pl| pl >= n_plants) {
        return Err(Error::InvalidInput(
            "PV group refers to a plant without a series".into(),
        ));
    }
    let block = minutes / p.steps;
    let mean = |pl: usize, k: usize| plant_minutes[pl][k * block..(k + 1) * block].iter().sum::<f64>() / block as f64;

    let mut out = Curtailment {
        plant_kw: vec![vec![0.0; minutes]; n_plants],
        planned_kwh: sol.shed_kwh(p.dt),
        realized_kwh: 0.0,
        capped_steps: Vec::new(),
    };
    for k in 0..p.steps {
        let required = sol.shed_at(k);
        if required <= 0.0 {
            continue;
        }
        if rampable {
            for (s, g) in p.pv_groups.iter().enumerate() {
                let shed = sol.shed[s][k];
                if shed <= 0.0 {
                    continue;
                }
                let means: Vec<f64> = g.plants.iter().map(|&pl| mean(pl, k)).collect();
                let total: f64 = means.iter().sum();
                if shed > total + FEAS_TOL {
                    out.capped_steps.push(k);
                }
                if total <= 0.0 {
                    continue;
                }
                for (&pl, &m) in g.plants.iter().zip(&means) {
                    let cap = (m - shed.min(total) * m / total).max(0.0);
                    for t in k * block..(k + 1) * block {
                        out.plant_kw[pl][t] = (plant_minutes[pl][t] - cap).max(0.0);
                    }
                }
            }
        } else {
            let outputs: Vec<f64> = p
                .pv_groups
                .iter()
                .map(|g| g.plants.iter().map(|&pl| mean(pl, k)).sum())
                .collect();
            let (chosen, covered) = smallest_cover(&outputs, required);
            if !covered {
                out.capped_steps.push(k);
            }
            for s in chosen {
                for &pl in &p.pv_groups[s].plants {
                    out.plant_kw[pl][k * block..(k + 1) * block]
                        .copy_from_slice(&plant_minutes[pl][k * block..(k + 1) * block]);
                }
            }
        }
    }
    out.realized_kwh = out.plant_kw.iter().flatten().sum::<f64>() * p.dt / block as f64;
    Ok(out)
}

/// Units with the smallest total output whose sum reaches `required`.
/// Returns every unit and `false` when even all of them fall short.
fn smallest_cover(outputs: &[f64], required: f64) -> (Vec<usize>, bool) {
    let total: f64 = outputs.iter().sum();
    let all: Vec<usize> = (0..outputs.len()).filter(|&s| outputs[s] > 0.0).collect();
    if total < required - FEAS_TOL {
        return (all, false);
    }
    let need = required - FEAS_TOL;
    if outputs.len() <= EXACT_COVER_UNITS {
        let mut best: Option<(f64, u32)> = None;
        for mask in 1u32..(1 << outputs.len()) {
            let sum: f64 = (0..outputs.len())
                .filter(|s| mask >> s & 1 == 1)
                .map(|s| outputs[s])
                .sum();
            if sum >= need && best.is_none_or(|(b, _)| sum < b - 1e-12) {
                best = Some((sum, mask));
            }
        }
        let (_, mask) = best.expect("the full set covers");
        return ((0..outputs.len()).filter(|s| mask >> s & 1 == 1).collect(), true);
    }
    // largest first until covered, then drop whatever is no longer needed
    let mut order: Vec<usize> = all.clone();
    order.sort_by(|&a, &b| outputs[b].total_cmp(&outputs[a]).then(a.cmp(&b)));
    let mut chosen = Vec::new();
    let mut sum = 0.0;
    for s in order {
        if sum >= need {
            break;
        }
        chosen.push(s);
        sum += outputs[s];
    }
    chosen.sort_by(|&a, &b| outputs[b].total_cmp(&outputs[a]));
    let mut i = 0;
    while i < chosen.len() {
        if sum - outputs[chosen[i]] >= need {
            sum -= outputs[chosen[i]];
            chosen.remove(i);
        } else {
            i += 1;
        }
    }
    chosen.sort_unstable();
    (chosen, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::problem::{EwhGroup, PvGroup};
    use crate::dispatch::solution::SolveStatus;

    fn setup(groups: Vec<Vec<usize>>, levels: &[f64], shed: f64) -> (DispatchProblem, DispatchSolution, Vec<Vec<f64>>) {
        let minutes: Vec<Vec<f64>> = levels.iter().map(|&l| vec![l; 10]).collect();
        let p = DispatchProblem {
            steps: 1,
            dt: 1.0 / 6.0,
            spot: vec![0.0],
            shed_cost: 0.342,
            switch_cost: 0.0,
            ewh_groups: vec![EwhGroup {
                members: vec![0],
                rating: 1.0,
                soc0: 0.0,
                soc_max: 1.0,
                draws: vec![0.0],
                terminal_min: 0.0,
                initial_on: false,
            }],
            pv_groups: groups
                .iter()
                .map(|g| PvGroup {
                    plants: g.clone(),
                    available: vec![g.iter().map(|&pl| levels[pl]).sum()],
                    rampable: g.len() == 1,
                })
                .collect(),
            p_min: -1000.0,
            p_max: 1000.0,
            baseline_load: vec![0.0],
        };
        let mut shed_rows = vec![vec![0.0]; groups.len()];
        shed_rows[0][0] = shed;
        let sol = DispatchSolution {
            b: vec![vec![false]],
            shed: shed_rows,
            s_on: vec![vec![0.0]],
            s_off: vec![vec![0.0]],
            soc: vec![vec![0.0, 0.0]],
            objective: 0.0,
            lower_bound: 0.0,
            status: SolveStatus::Heuristic,
        };
        (p, sol, minutes)
    }

    #[test]
    fn proportional_ramp() {
        let (p, sol, minutes) = setup(vec![vec![0, 1]], &[10.0, 10.0], 10.0);
        let c = apply_shedding(&p, &sol, &minutes, true).unwrap();
        assert!((c.plant_kw[0][3] - 5.0).abs() < 1e-12 && (c.plant_kw[1][3] - 5.0).abs() < 1e-12);
        assert!((c.realized_kwh - c.planned_kwh).abs() < 1e-12);
    }

    #[test]
    fn on_off_overshoot() {
        let (p, sol, minutes) = setup(vec![vec![0, 1]], &[8.0, 7.0], 10.0);
        let c = apply_shedding(&p, &sol, &minutes, false).unwrap();
        assert!((c.realized_kwh - 15.0 / 6.0).abs() < 1e-12);
        assert!((c.overshoot_kwh() - 5.0 / 6.0).abs() < 1e-12);

        let (p, sol, minutes) = setup(vec![vec![0], vec![1]], &[8.0, 7.0], 10.0);
        let c = apply_shedding(&p, &sol, &minutes, false).unwrap();
        assert!((c.realized_kwh - 15.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn no_shed_no_action() {
        let (p, sol, minutes) = setup(vec![vec![0, 1]], &[8.0, 7.0], 0.0);
        for ramp in [true, false] {
            let c = apply_shedding(&p, &sol, &minutes, ramp).unwrap();
            assert_eq!(c.realized_kwh, 0.0);
        }
    }

    #[test]
    fn over_request_is_capped_and_flagged() {
        let (p, sol, minutes) = setup(vec![vec![0]], &[5.0], 9.0);
        let c = apply_shedding(&p, &sol, &minutes, true).unwrap();
        assert_eq!(c.capped_steps, vec![0]);
        assert!((c.realized_kwh - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cover_picks_the_tightest_set() {
        let (set, ok) = smallest_cover(&[5.0, 4.0, 3.0, 9.0], 7.0);
        assert!(ok);
        assert_eq!(set, vec![1, 2]);
        let big: Vec<f64> = (0..20).map(|i| 1.0 + (i % 3) as f64).collect();
        let (set, ok) = smallest_cover(&big, 10.0);
        let sum: f64 = set.iter().map(|&s| big[s]).sum();
        assert!(ok && sum >= 10.0 && sum <= 12.0);
    }
}
