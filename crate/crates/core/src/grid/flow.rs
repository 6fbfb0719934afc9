use num_complex::Complex64;
use serde::Serialize;

use super::model::{FeederModel, BASE_KVA};
use crate::error::{Error, Result};

pub const SWEEP_TOLERANCE: f64 = 1e-8;
pub const SWEEP_MAX_ITERATIONS: usize = 100;

/// Net consumption at a bus. Generation is negative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BusLoad {
    pub p_kw: f64,
    pub q_kvar: f64,
}

impl BusLoad {
    pub fn new(p_kw: f64, q_kvar: f64) -> Self {
        BusLoad { p_kw, q_kvar }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LineFlow {
    /// Power entering the line at its upstream end.
    pub p_kw: f64,
    pub q_kvar: f64,
    pub current_a: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerFlowSolution {
    /// Voltage magnitudes in p.u., indexed by bus id.
    pub voltages: Vec<f64>,
    #[serde(skip)]
    pub phasors: Vec<Complex64>,
    pub line_flows: Vec<LineFlow>,
    pub losses_kw: f64,
    pub slack_p_kw: f64,
    pub slack_q_kvar: f64,
    pub iterations: usize,
}

impl PowerFlowSolution {
    pub fn min_voltage(&self) -> f64 {
        self.voltages.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_voltage(&self) -> f64 {
        self.voltages.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Backward/forward sweep on the radial feeder.
///
/// Loads are constant-power. Each iteration sums branch currents from the
/// leaves towards the busbar, then updates voltages outward from the fixed
/// busbar voltage, until the largest phasor change is below
/// [`SWEEP_TOLERANCE`].
pub fn solve_power_flow(model: &FeederModel, loads: &[BusLoad]) -> Result<PowerFlowSolution> {
    let mut workspace = SweepWorkspace::new(model);
    workspace.solve(model, loads)
}

/// Reusable buffers for repeated sweeps on one feeder.
pub struct SweepWorkspace {
    voltage: Vec<Complex64>,
    injection: Vec<Complex64>,
    branch: Vec<Complex64>,
    impedance: Vec<Complex64>,
}

impl SweepWorkspace {
    pub fn new(model: &FeederModel) -> Self {
        let n = model.n_buses();
        let z_base = model.base_impedance();
        let mut impedance = vec![Complex64::new(0.0, 0.0); n];
        for bus in 1..n {
            let line = &model.lines()[model.topology.parent_line[bus]];
            impedance[bus] = Complex64::new(line.resistance_ohm / z_base, line.reactance_ohm / z_base);
        }
        SweepWorkspace {
            voltage: vec![Complex64::new(model.busbar_voltage, 0.0); n],
            injection: vec![Complex64::new(0.0, 0.0); n],
            branch: vec![Complex64::new(0.0, 0.0); n],
            impedance,
        }
    }

    /// Runs the sweep, starting from the previous solution held in the
    /// workspace. Returns only what the minute simulator needs.
    pub fn solve_voltages(&mut self, model: &FeederModel, loads: &[BusLoad]) -> Result<(usize, f64)> {
        let n = model.n_buses();
        if loads.len() != n {
            return Err(Error::InvalidInput(format!(
                "power flow needs {n} bus loads, got {}",
                loads.len()
            )));
        }
        let topo = &model.topology;
        let v0 = Complex64::new(model.busbar_voltage, 0.0);
        if self.voltage.iter().any(|v| !v.norm().is_finite() || v.norm() < 0.5) {
            self.voltage.iter_mut().for_each(|v| *v = v0);
        }
        self.voltage[0] = v0;
        let s: Vec<Complex64> = loads
            .iter()
            .map(|l| Complex64::new(l.p_kw / BASE_KVA, l.q_kvar / BASE_KVA))
            .collect();
        if s.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite bus load".into()));
        }

        let mut max_delta = f64::INFINITY;
        for iteration in 1..=SWEEP_MAX_ITERATIONS {
            for bus in 0..n {
                self.injection[bus] = (s[bus] / self.voltage[bus]).conj();
            }
            // backward: accumulate currents leaves -> root
            self.branch.copy_from_slice(&self.injection);
            for &bus in topo.order.iter().rev() {
                if bus == 0 {
                    continue;
                }
                let parent = topo.parent_bus[bus];
                let current = self.branch[bus];
                self.branch[parent] += current;
            }
            // forward: update voltages root -> leaves
            max_delta = 0.0;
            for &bus in topo.order.iter().skip(1) {
                let parent = topo.parent_bus[bus];
                let updated = self.voltage[parent] - self.impedance[bus] * self.branch[bus];
                max_delta = max_delta.max((updated - self.voltage[bus]).norm());
                self.voltage[bus] = updated;
            }
            if !max_delta.is_finite() || self.voltage.iter().any(|v| v.norm() < 0.1) {
                break;
            }
            if max_delta < SWEEP_TOLERANCE {
                return Ok((iteration, max_delta));
            }
        }
        self.voltage.iter_mut().for_each(|v| *v = v0);
        Err(Error::PowerFlowDiverged {
            iterations: SWEEP_MAX_ITERATIONS,
            max_delta,
        })
    }

    pub fn voltage(&self, bus: usize) -> f64 {
        self.voltage[bus].norm()
    }

    pub fn max_voltage(&self) -> f64 {
        self.voltage.iter().map(|v| v.norm()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_voltage(&self) -> f64 {
        self.voltage.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Series losses of the last solution in kW. The branch currents are
    /// recomputed from the final voltages so losses match them exactly.
    pub fn losses_kw(&self, model: &FeederModel) -> f64 {
        let mut total = 0.0;
        for bus in 1..model.n_buses() {
            let parent = model.topology.parent_bus[bus];
            let current = (self.voltage[parent] - self.voltage[bus]) / self.impedance[bus];
            total += current.norm_sqr() * self.impedance[bus].re;
        }
        total * BASE_KVA
    }

    pub fn solve(&mut self, model: &FeederModel, loads: &[BusLoad]) -> Result<PowerFlowSolution> {
        let (iterations, _) = self.solve_voltages(model, loads)?;
        let n = model.n_buses();
        let topo = &model.topology;
        let i_base = BASE_KVA * 1e3 / (3f64.sqrt() * model.nominal_voltage);
        let mut line_flows = vec![LineFlow::default(); model.lines().len()];
        let mut losses = 0.0;
        let mut slack = Complex64::new(0.0, 0.0);
        for bus in 1..n {
            let parent = topo.parent_bus[bus];
            let z = self.impedance[bus];
            let current = (self.voltage[parent] - self.voltage[bus]) / z;
            let sending = self.voltage[parent] * current.conj();
            losses += current.norm_sqr() * z.re;
            line_flows[topo.parent_line[bus]] = LineFlow {
                p_kw: sending.re * BASE_KVA,
                q_kvar: sending.im * BASE_KVA,
                current_a: current.norm() * i_base,
            };
            if parent == 0 {
                slack += sending;
            }
        }
        // loads connected directly at the busbar are served by the slack too
        slack += Complex64::new(loads[0].p_kw, loads[0].q_kvar) / BASE_KVA;
        Ok(PowerFlowSolution {
            voltages: self.voltage.iter().map(|v| v.norm()).collect(),
            phasors: self.voltage.clone(),
            line_flows,
            losses_kw: losses * BASE_KVA,
            slack_p_kw: slack.re * BASE_KVA,
            slack_q_kvar: slack.im * BASE_KVA,
            iterations,
        })
    }
}

/// Largest voltage rise above the busbar, in percent of nominal voltage.
pub fn max_voltage_rise(solution: &PowerFlowSolution, model: &FeederModel) -> f64 {
    rise_percent(solution.max_voltage(), model)
}

pub(crate) fn rise_percent(max_voltage: f64, model: &FeederModel) -> f64 {
    ((max_voltage - model.busbar_voltage) * 100.0).max(0.0)
}
