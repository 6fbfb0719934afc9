use proptest::prelude::*;

use pvflex::dispatch::{check_feasible, solve, solve_bnb, solve_exact, BnbOptions, SolverKind, SolverOptions};
use pvflex::forecast::{make_forecast, ForecastConfig};
use pvflex::grid::{default_feeder, solve_power_flow, BusLoad};

mod common;
use common::{random_problem, Shape};

const SMALL: Shape = Shape {
    max_groups: 3,
    max_steps: 8,
    max_binaries: 12,
};

const MEDIUM: Shape = Shape {
    max_groups: 4,
    max_steps: 36,
    max_binaries: 36,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solvers_agree_or_all_report_infeasible(seed in any::<u64>()) {
        let p = random_problem(&mut common::rng(seed), SMALL);
        let exact = solve_exact(&p);
        let bnb = solve_bnb(&p, &BnbOptions { gap_tol: 0.0, ..Default::default() });
        match (exact, bnb) {
            (Ok(e), Ok(b)) => {
                prop_assert!((e.objective - b.objective).abs() <= 1e-6 * (1.0 + e.objective.abs()));
                prop_assert!(check_feasible(&p, &b).passed());
            }
            (Err(_), Err(_)) => {}
            (e, b) => prop_assert!(false, "exact {:?} vs bnb {:?}", e.map(|s| s.objective), b.map(|s| s.objective)),
        }
    }

    #[test]
    fn heuristic_never_beats_the_optimum(seed in any::<u64>()) {
        let p = random_problem(&mut common::rng(seed), SMALL);
        if let Ok(opt) = solve_exact(&p) {
            let h = solve(&p, &SolverOptions::with_kind(SolverKind::Heuristic));
            if let Ok(h) = h {
                prop_assert!(check_feasible(&p, &h).passed());
                prop_assert!(h.objective >= opt.objective - 1e-9);
            }
        }
    }

    #[test]
    fn returned_schedules_are_feasible(seed in any::<u64>()) {
        let p = random_problem(&mut common::rng(seed), MEDIUM);
        for kind in [SolverKind::Heuristic, SolverKind::Bnb] {
            let opts = SolverOptions { time_limit: Some(0.5), ..SolverOptions::with_kind(kind) };
            if let Ok(sol) = solve(&p, &opts) {
                let report = check_feasible(&p, &sol);
                prop_assert!(report.passed(), "{kind:?}: {:?}", report.violated());
            }
        }
    }

    #[test]
    fn generation_raises_and_load_lowers_voltage(kw in 0.1f64..300.0) {
        let feeder = default_feeder();
        let n = feeder.n_buses();
        let gen: Vec<BusLoad> = (0..n).map(|b| BusLoad::new(if b == 0 { 0.0 } else { -kw / n as f64 }, 0.0)).collect();
        let load: Vec<BusLoad> = gen.iter().map(|l| BusLoad::new(-l.p_kw, 0.0)).collect();
        let up = solve_power_flow(&feeder, &gen).unwrap();
        let down = solve_power_flow(&feeder, &load).unwrap();
        for b in 1..n {
            prop_assert!(up.voltages[b] > feeder.busbar_voltage);
            prop_assert!(down.voltages[b] < feeder.busbar_voltage);
        }
        prop_assert!(up.losses_kw > 0.0 && down.losses_kw > 0.0);
    }

    #[test]
    fn forecasts_stay_in_the_envelope(seed in any::<u64>(), hour in 0usize..24, day in 0u64..365) {
        let minutes: Vec<f64> = (0..1440)
            .map(|m| if (300..1200).contains(&m) { ((m - 300) as f64 * std::f64::consts::PI / 900.0).sin() } else { 0.0 })
            .collect();
        let config = ForecastConfig { seed, ..Default::default() };
        let t = make_forecast(&minutes, hour, day, &config).unwrap();
        for (v, a) in t.values.iter().zip(&t.actual) {
            prop_assert!(*v >= 0.7 * a - 1e-12 && *v <= 1.4 * a + 1e-12);
        }
    }
}

#[test]
fn zero_power_flow_is_flat() {
    let feeder = default_feeder();
    let sol = solve_power_flow(&feeder, &vec![BusLoad::default(); feeder.n_buses()]).unwrap();
    assert!(sol.voltages.iter().all(|v| (v - feeder.busbar_voltage).abs() < 1e-12));
    assert_eq!(sol.losses_kw, 0.0);
}
