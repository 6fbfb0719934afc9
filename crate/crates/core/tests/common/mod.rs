#![allow(dead_code)]

pub mod flow;

use pvflex::dispatch::{solve_exact, DispatchProblem, EwhGroup, PvGroup, DEFAULT_SHED_COST, STEP_HOURS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Size limits for [`random_problem`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_groups: usize,
    pub max_steps: usize,
    pub max_binaries: usize,
}

/// A random dispatch instance. Prices, draws, PV and limits are drawn
/// independently, so some instances are infeasible; degenerate cases (one
/// step, zero prices, heaters without demand) come up regularly.
pub fn random_problem(rng: &mut ChaCha8Rng, shape: Shape) -> DispatchProblem {
    let groups = rng.random_range(1..=shape.max_groups);
    let steps = rng.random_range(1..=shape.max_steps.min(shape.max_binaries / groups).max(1));
    let zero_prices = rng.random_bool(0.1);
    let spot: Vec<f64> = (0..steps)
        .map(|_| if zero_prices { 0.0 } else { rng.random_range(0.01..0.15) })
        .collect();
    let ewh_groups = (0..groups)
        .map(|i| {
            let members = rng.random_range(1..=3usize);
            let rating = 4.5 * members as f64;
            let soc_max = 3.0 * members as f64 * rng.random_range(0.6..1.2);
            let idle = rng.random_bool(0.15);
            let draws: Vec<f64> = (0..steps)
                .map(|_| {
                    if idle || rng.random_bool(0.4) {
                        0.0
                    } else {
                        rng.random_range(0.0..0.5 * rating * STEP_HOURS)
                    }
                })
                .collect();
            EwhGroup {
                members: (0..members).map(|m| 3 * i + m).collect(),
                rating,
                soc0: soc_max * rng.random_range(0.2..0.9),
                soc_max,
                draws,
                terminal_min: if idle {
                    0.0
                } else {
                    soc_max * rng.random_range(0.0..0.3)
                },
                initial_on: rng.random_bool(0.3),
            }
        })
        .collect();
    let pv_groups = (0..rng.random_range(1..=2usize))
        .map(|j| PvGroup {
            plants: vec![j],
            available: (0..steps).map(|_| rng.random_range(0.0..40.0)).collect(),
            rampable: rng.random_bool(0.7),
        })
        .collect();
    DispatchProblem {
        steps,
        dt: STEP_HOURS,
        spot,
        shed_cost: DEFAULT_SHED_COST,
        switch_cost: if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(0.0..0.05)
        },
        ewh_groups,
        pv_groups,
        p_min: -rng.random_range(2.0..30.0),
        p_max: rng.random_range(15.0..80.0),
        baseline_load: (0..steps).map(|_| rng.random_range(1.0..20.0)).collect(),
    }
}

/// Draws instances until one has a feasible dispatch.
pub fn feasible_problem(rng: &mut ChaCha8Rng, shape: Shape) -> DispatchProblem {
    loop {
        let p = random_problem(rng, shape);
        if p.n_binaries() <= 24 {
            if solve_exact(&p).is_ok() {
                return p;
            }
        } else {
            return p;
        }
    }
}
