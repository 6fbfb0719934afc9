use super::problem::{DispatchProblem, FEAS_TOL};
use super::solution::{DispatchSolution, SolveStatus};
use crate::assets::soc_step;
use crate::error::{Error, Result};

/// Largest instance the enumerator accepts.
pub const MAX_EXACT_BINARIES: usize = 24;

/// Optimal dispatch by enumerating every on/off matrix.
///
/// Step by step, all `2^groups` switch patterns are tried; a branch is
/// dropped as soon as a charge bound fails or the remaining draws can no
/// longer be covered. Given the switch pattern, the cheapest shed at each
/// step is determined independently.
pub fn solve_exact(p: &DispatchProblem) -> Result<DispatchSolution> {
    p.validate()?;
    if p.n_binaries() > MAX_EXACT_BINARIES {
        return Err(Error::SolverLimit(format!(
            "exhaustive search is limited to {MAX_EXACT_BINARIES} binaries, instance has {}",
            p.n_binaries()
        )));
    }
    let ni = p.n_ewh();
    let floors: Vec<Vec<f64>> = (0..ni).map(|i| p.soc_floor(i)).collect();
    let mut search = Search {
        p,
        floors,
        soc: p.ewh_groups.iter().map(|g| g.soc0).collect(),
        prev: p.ewh_groups.iter().map(|g| g.initial_on).collect(),
        path: vec![0; p.steps],
        best: None,
    };
    search.descend(0, 0.0);
    let Some((_, masks)) = search.best else {
        let why = p
            .diagnose()
            .unwrap_or_else(|| "no switching pattern meets all constraints".into());
        return Err(Error::Infeasible(why));
    };
    let b: Vec<Vec<bool>> = (0..ni)
        .map(|i| masks.iter().map(|m| m >> i & 1 == 1).collect())
        .collect();
    let mut sol = p
        .evaluate(&b)
        .map_err(|v| Error::Infeasible(format!("enumerated optimum failed re-evaluation: {v:?}")))?;
    sol.lower_bound = sol.objective;
    sol.status = SolveStatus::Optimal;
    Ok(sol)
}

struct Search<'a> {
    p: &'a DispatchProblem,
    floors: Vec<Vec<f64>>,
    soc: Vec<f64>,
    prev: Vec<bool>,
    path: Vec<u32>,
    best: Option<(f64, Vec<u32>)>,
}

impl Search<'_> {
    fn descend(&mut self, k: usize, cost: f64) {
        let p = self.p;
        if k == p.steps {
            if self.best.as_ref().is_none_or(|(c, _)| cost < *c) {
                self.best = Some((cost, self.path.clone()));
            }
            return;
        }
        let ni = p.n_ewh();
        let saved_soc = self.soc.clone();
        let saved_prev = self.prev.clone();
        'masks: for mask in 0..(1u32 << ni) {
            let mut step_cost = 0.0;
            let mut ewh_kw = 0.0;
            for (i, g) in p.ewh_groups.iter().enumerate() {
                let on = mask >> i & 1 == 1;
                let next = soc_step(saved_soc[i], g.rating, on, p.dt, g.draws[k]).soc;
                if next < self.floors[i][k + 1] - FEAS_TOL || next > g.soc_max + FEAS_TOL {
                    continue 'masks;
                }
                self.soc[i] = next;
                if on {
                    ewh_kw += g.rating;
                    step_cost += p.spot[k] * g.rating * p.dt;
                }
                if on != saved_prev[i] {
                    step_cost += p.switch_cost;
                }
            }
            let Ok(shed) = p.required_shed(k, ewh_kw) else {
                continue;
            };
            step_cost += p.shed_cost * shed * p.dt;
            for i in 0..ni {
                self.prev[i] = mask >> i & 1 == 1;
            }
            self.path[k] = mask;
            self.descend(k + 1, cost + step_cost);
        }
        self.soc = saved_soc;
        self.prev = saved_prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::problem::{EwhGroup, PvGroup};
    use crate::dispatch::solution::check_feasible;

    fn single(steps: usize, pv: Vec<f64>, demand: f64) -> DispatchProblem {
        DispatchProblem {
            steps,
            dt: 1.0 / 6.0,
            spot: vec![0.1; steps],
            shed_cost: 0.342,
            switch_cost: 0.0,
            ewh_groups: vec![EwhGroup {
                members: vec![0],
                rating: 4.5,
                soc0: 0.0,
                soc_max: 18.0,
                draws: {
                    let mut d = vec![0.0; steps];
                    d[steps - 1] = demand;
                    d
                },
                terminal_min: 0.0,
                initial_on: false,
            }],
            pv_groups: vec![PvGroup {
                plants: vec![0],
                available: pv,
                rampable: true,
            }],
            p_min: -20.0,
            p_max: 100.0,
            baseline_load: vec![0.0; steps],
        }
    }

    #[test]
    fn flat_prices_cost_is_energy_times_price() {
        let p = single(8, vec![0.0; 8], 3.0);
        let sol = solve_exact(&p).unwrap();
        assert!((sol.objective - 3.0 * 0.1).abs() < 1e-12);
        assert_eq!(sol.b[0].iter().filter(|&&b| b).count(), 4);
        assert!(check_feasible(&p, &sol).passed());
    }

    #[test]
    fn excess_pv_is_shed() {
        let mut pv = vec![0.0; 6];
        pv[2] = 40.0;
        let mut p = single(6, pv, 0.0);
        p.spot = vec![0.0; 6];
        let sol = solve_exact(&p).unwrap();
        // heater on at the sunny step, the remaining 15.5 kW over the limit are shed
        assert!(sol.b[0][2]);
        assert!((sol.shed[0][2] - 15.5).abs() < 1e-12);
        assert!((sol.objective - 0.342 * 15.5 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_demand_is_reported() {
        let p = single(2, vec![0.0; 2], 5.0);
        let err = solve_exact(&p).unwrap_err();
        assert!(err.to_string().contains("heater group 0"), "{err}");
    }

    #[test]
    fn too_large_rejected() {
        let p = single(30, vec![0.0; 30], 1.0);
        assert!(matches!(solve_exact(&p), Err(Error::SolverLimit(_))));
    }
}
