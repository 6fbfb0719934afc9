use serde::{Deserialize, Serialize};

use super::problem::{DispatchProblem, FEAS_TOL};
use crate::assets::soc_step;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped with a relative gap between incumbent and bound.
    Gap(f64),
    Heuristic,
}

/// A dispatch schedule. Matrices are indexed `[group][step]`; `soc` has
/// one more column than there are steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub b: Vec<Vec<bool>>,
    /// Shed per PV group, kW.
    pub shed: Vec<Vec<f64>>,
    pub s_on: Vec<Vec<f64>>,
    pub s_off: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub objective: f64,
    /// Certified lower bound on the optimum; `-inf` when none is known.
    #[serde(with = "maybe_bound")]
    pub lower_bound: f64,
    pub status: SolveStatus,
}

/// Non-finite bounds travel as `null`.
mod maybe_bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl DispatchSolution {
    pub fn shed_kwh(&self, dt: f64) -> f64 {
        self.shed.iter().flatten().sum::<f64>() * dt
    }

    pub fn shed_at(&self, k: usize) -> f64 {
        self.shed.iter().map(|row| row[k]).sum()
    }

    /// On/off actions summed over groups.
    pub fn switch_actions(&self) -> f64 {
        self.s_on.iter().flatten().sum::<f64>() + self.s_off.iter().flatten().sum::<f64>()
    }

    pub fn gap(&self) -> f64 {
        (self.objective - self.lower_bound).max(0.0) / self.objective.abs().max(1.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Largest violation of one constraint family and where it occurs as
/// `(group, step)`; the group is 0 for per-step constraints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Residual {
    pub max: f64,
    pub at: Option<(usize, usize)>,
}

impl Residual {
    fn record(&mut self, value: f64, group: usize, step: usize) {
        if value > self.max {
            self.max = value;
            self.at = Some((group, step));
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub shapes_ok: bool,
    pub transformer: Residual,
    pub soc_dynamics: Residual,
    pub initial_soc: Residual,
    pub soc_bounds: Residual,
    pub terminal_soc: Residual,
    pub shed_bounds: Residual,
    pub switching: Residual,
    /// Relative difference between the stated and recomputed objective.
    pub objective_mismatch: f64,
}

impl FeasibilityReport {
    pub fn residuals(&self) -> [(&'static str, Residual); 7] {
        [
            ("transformer", self.transformer),
            ("soc_dynamics", self.soc_dynamics),
            ("initial_soc", self.initial_soc),
            ("soc_bounds", self.soc_bounds),
            ("terminal_soc", self.terminal_soc),
            ("shed_bounds", self.shed_bounds),
            ("switching", self.switching),
        ]
    }

    pub fn worst(&self) -> f64 {
        self.residuals().iter().map(|(_, r)| r.max).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.shapes_ok && self.worst() <= FEAS_TOL && self.objective_mismatch <= FEAS_TOL
    }

    pub fn violated(&self) -> Vec<&'static str> {
        self.residuals()
            .iter()
            .filter(|(_, r)| r.max > FEAS_TOL)
            .map(|(name, _)| *name)
            .collect()
    }
}

/// Recomputes every constraint of the model for `sol`.
pub fn check_feasible(p: &DispatchProblem, sol: &DispatchSolution) -> FeasibilityReport {
    let n = p.steps;
    let ni = p.ewh_groups.len();
    let rows_ok = |m: &[Vec<f64>], rows: usize, cols: usize| m.len() == rows && m.iter().all(|r| r.len() == cols);
    let mut rep = FeasibilityReport {
        shapes_ok: sol.b.len() == ni
            && sol.b.iter().all(|r| r.len() == n)
            && rows_ok(&sol.shed, p.pv_groups.len(), n)
            && rows_ok(&sol.s_on, ni, n)
            && rows_ok(&sol.s_off, ni, n)
            && rows_ok(&sol.soc, ni, n + 1),
        ..Default::default()
    };
    if !rep.shapes_ok {
        return rep;
    }

    for k in 0..n {
        let flow = p.net_flow(k, p.ewh_power(&sol.b, k)) + sol.shed_at(k);
        rep.transformer.record(p.p_min - flow, 0, k);
        rep.transformer.record(flow - p.p_max, 0, k);
        for (s, g) in p.pv_groups.iter().enumerate() {
            rep.shed_bounds.record(-sol.shed[s][k], s, k);
            rep.shed_bounds.record(sol.shed[s][k] - g.available[k], s, k);
        }
    }

    for (i, g) in p.ewh_groups.iter().enumerate() {
        let x = &sol.soc[i];
        rep.initial_soc.record((x[0] - g.soc0).abs(), i, 0);
        let mut prev = g.initial_on;
        for k in 0..n {
            let next = soc_step(x[k], g.rating, sol.b[i][k], p.dt, g.draws[k]).soc;
            rep.soc_dynamics.record((x[k + 1] - next).abs(), i, k);
            rep.soc_bounds.record(-x[k + 1], i, k + 1);
            rep.soc_bounds.record(x[k + 1] - g.soc_max, i, k + 1);

            let delta = sol.b[i][k] as i32 as f64 - prev as i32 as f64;
            let (on, off) = (sol.s_on[i][k], sol.s_off[i][k]);
            rep.switching.record((on - off - delta).abs(), i, k);
            for v in [on, off] {
                rep.switching.record(-v, i, k);
                rep.switching.record(v - 1.0, i, k);
            }
            prev = sol.b[i][k];
        }
        rep.terminal_soc.record(g.terminal_min - x[n], i, n);
    }

    let recomputed = p.objective(&sol.b, &sol.shed, &sol.s_on, &sol.s_off);
    rep.objective_mismatch = (recomputed - sol.objective).abs() / recomputed.abs().max(1.0);
    rep
}
