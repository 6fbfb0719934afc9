//! Independent power-flow references: Newton-Raphson in rectangular
//! coordinates and the closed-form two-bus solution.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pvflex::grid::{solve_power_flow, Bus, BusLoad, FeederModel, Line, BASE_KVA};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn feeder(parents: &[usize], z: &[(f64, f64)]) -> FeederModel {
    let mut buses = vec![Bus::busbar()];
    let mut lines = Vec::new();
    for (i, (&parent, &(r, x))) in parents.iter().zip(z).enumerate() {
        buses.push(Bus {
            id: i + 1,
            households: 1,
            has_load: true,
            has_pv: true,
        });
        lines.push(Line {
            from_bus: parent,
            to_bus: i + 1,
            resistance_ohm: r,
            reactance_ohm: x,
            ampacity_a: None,
        });
    }
    FeederModel::new(buses, lines, 1.01, 400.0, 630.0, 1e6, -1e6).unwrap()
}

/// Newton-Raphson on `F(e, f) = S(V) - S_target` with the analytic Jacobian
/// `dS_i/de_k = V_i conj(Y_ik) + [i=k] conj(I_i)`,
/// `dS_i/df_k = -j V_i conj(Y_ik) + [i=k] j conj(I_i)`.
pub fn newton(model: &FeederModel, loads: &[BusLoad]) -> Vec<Complex64> {
    let n = model.n_buses();
    let z_base = model.base_impedance();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for l in model.lines() {
        let yl = 1.0 / Complex64::new(l.resistance_ohm / z_base, l.reactance_ohm / z_base);
        let (a, b) = (l.from_bus, l.to_bus);
        y[a][a] += yl;
        y[b][b] += yl;
        y[a][b] -= yl;
        y[b][a] -= yl;
    }
    let target: Vec<Complex64> = loads
        .iter()
        .map(|l| -Complex64::new(l.p_kw, l.q_kvar) / BASE_KVA)
        .collect();
    let mut v = vec![Complex64::new(model.busbar_voltage, 0.0); n];
    let m = n - 1;
    for _ in 0..50 {
        let current: Vec<Complex64> = (0..n).map(|i| (0..n).map(|k| y[i][k] * v[k]).sum()).collect();
        let mut f = DVector::zeros(2 * m);
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for i in 1..n {
            let s = v[i] * current[i].conj() - target[i];
            f[i - 1] = s.re;
            f[m + i - 1] = s.im;
            for k in 1..n {
                let mut ds_de = v[i] * y[i][k].conj();
                let mut ds_df = -Complex64::i() * v[i] * y[i][k].conj();
                if i == k {
                    ds_de += current[i].conj();
                    ds_df += Complex64::i() * current[i].conj();
                }
                jac[(i - 1, k - 1)] = ds_de.re;
                jac[(i - 1, m + k - 1)] = ds_df.re;
                jac[(m + i - 1, k - 1)] = ds_de.im;
                jac[(m + i - 1, m + k - 1)] = ds_df.im;
            }
        }
        if f.amax() < 1e-14 {
            break;
        }
        let step = jac.lu().solve(&f).expect("nonsingular Jacobian");
        for i in 1..n {
            v[i] -= Complex64::new(step[i - 1], step[m + i - 1]);
        }
    }
    v
}

/// Receiving-end magnitude of a two-bus line from
/// `|V2|^4 + (2(rP + xQ) - |V1|^2) |V2|^2 + (r^2 + x^2)(P^2 + Q^2) = 0`,
/// with `P + jQ` the consumption at bus 2 in p.u.
pub fn two_bus(v1: f64, r: f64, x: f64, p: f64, q: f64) -> f64 {
    let b = 2.0 * (r * p + x * q) - v1 * v1;
    let c = (r * r + x * x) * (p * p + q * q);
    ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

/// Largest phasor or magnitude gap between the sweep and Newton over
/// `cases` random radial feeders of two to four buses.
pub fn worst_newton_gap(rng: &mut ChaCha8Rng, cases: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(1..=3usize);
        let parents: Vec<usize> = (0..n).map(|i| rng.random_range(0..=i)).collect();
        let z: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.01..0.2), rng.random_range(0.005..0.1)))
            .collect();
        let model = feeder(&parents, &z);
        let mut loads = vec![BusLoad::default()];
        loads.extend((0..n).map(|_| BusLoad::new(rng.random_range(-60.0..60.0), rng.random_range(-10.0..20.0))));
        let sweep = solve_power_flow(&model, &loads).unwrap();
        let v = newton(&model, &loads);
        for (a, b) in sweep.phasors.iter().zip(&v) {
            worst = worst.max((a - b).norm());
        }
        for (a, b) in sweep.voltages.iter().zip(&v) {
            worst = worst.max((a - b.norm()).abs());
        }
    }
    worst
}

/// Largest gap to the closed form over a few loaded and back-fed lines.
pub fn worst_two_bus_gap() -> f64 {
    let mut worst: f64 = 0.0;
    for &(r, x, p, q) in &[
        (0.1, 0.05, 10.0, 2.0),
        (0.1, 0.05, -30.0, 0.0),
        (0.3, 0.1, 45.0, 15.0),
        (0.05, 0.08, -80.0, 10.0),
    ] {
        let model = feeder(&[0], &[(r, x)]);
        let sol = solve_power_flow(&model, &[BusLoad::default(), BusLoad::new(p, q)]).unwrap();
        let z = model.base_impedance();
        let expect = two_bus(1.01, r / z, x / z, p / BASE_KVA, q / BASE_KVA);
        worst = worst.max((sol.voltages[1] - expect).abs());
    }
    worst
}
