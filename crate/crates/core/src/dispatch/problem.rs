use serde::{Deserialize, Serialize};

use super::solution::{DispatchSolution, SolveStatus};
use crate::assets::{soc_step, DrawProfile, Ewh, PvPlant};
use crate::error::{Error, Result};

pub const FEED_IN_TARIFF: f64 = 0.36;
pub const SHED_COMPENSATION: f64 = 0.95;
/// Compensation paid per curtailed kWh, EUR.
pub const DEFAULT_SHED_COST: f64 = SHED_COMPENSATION * FEED_IN_TARIFF;
pub const STEP_HOURS: f64 = 1.0 / 6.0;
/// Absolute tolerance on every constraint.
pub const FEAS_TOL: f64 = 1e-9;

/// Water heaters controlled as one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwhGroup {
    pub members: Vec<usize>,
    pub rating: f64,
    pub soc0: f64,
    pub soc_max: f64,
    /// Hot-water energy drawn per step, kWh.
    pub draws: Vec<f64>,
    /// Minimum charge left at the end of the horizon.
    pub terminal_min: f64,
    /// Switching state before the first step.
    pub initial_on: bool,
}

/// PV plants curtailed as one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvGroup {
    pub plants: Vec<usize>,
    /// Available output per step, kW.
    pub available: Vec<f64>,
    pub rampable: bool,
}

/// One instance of the dispatch model.
///
/// Transformer flow at step `k` is `load - pv + shed + sum(rating * on)`
/// and must stay in `[p_min, p_max]`. Storage follows
/// `soc[k + 1] = soc[k] + rating * on * dt - draw[k]`, stays within
/// `[0, soc_max]` and ends at or above `terminal_min`. The objective is
/// spot-priced heater energy plus shed compensation plus a switching
/// penalty per on or off action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchProblem {
    pub steps: usize,
    pub dt: f64,
    /// EUR/kWh per step.
    pub spot: Vec<f64>,
    pub shed_cost: f64,
    pub switch_cost: f64,
    pub ewh_groups: Vec<EwhGroup>,
    pub pv_groups: Vec<PvGroup>,
    pub p_min: f64,
    pub p_max: f64,
    /// Passive demand per step, kW.
    pub baseline_load: Vec<f64>,
}

/// Why a given on/off matrix cannot be completed to a feasible dispatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    TransformerUpper { step: usize, excess: f64 },
    SocLow { group: usize, step: usize },
    SocHigh { group: usize, step: usize },
    Terminal { group: usize },
}

impl DispatchProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.steps;
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if n == 0 {
            return bad("dispatch needs at least one step".into());
        }
        if !(self.dt > 0.0) {
            return bad("step length must be positive".into());
        }
        if !(self.p_min < self.p_max) {
            return bad(format!("need p_min ({}) < p_max ({})", self.p_min, self.p_max));
        }
        if self.spot.len() != n || self.baseline_load.len() != n {
            return bad(format!("spot and load series must have {n} steps"));
        }
        if !(self.shed_cost >= 0.0) || !(self.switch_cost >= 0.0) {
            return bad("costs must be non-negative".into());
        }
        for (i, g) in self.ewh_groups.iter().enumerate() {
            if g.draws.len() != n {
                return bad(format!("heater group {i}: draws must have {n} steps"));
            }
            if !(g.rating > 0.0) || !(g.soc_max >= 0.0) || !(0.0..=g.soc_max).contains(&g.soc0) {
                return bad(format!("heater group {i}: need rating > 0 and 0 <= soc0 <= soc_max"));
            }
            if g.draws.iter().any(|d| !(*d >= 0.0)) || !(g.terminal_min >= 0.0) {
                return bad(format!(
                    "heater group {i}: draws and terminal charge must be non-negative"
                ));
            }
        }
        for (s, g) in self.pv_groups.iter().enumerate() {
            if g.available.len() != n || g.available.iter().any(|p| !(*p >= 0.0)) {
                return bad(format!("pv group {s}: need {n} non-negative values"));
            }
        }
        if self.baseline_load.iter().any(|l| !(*l >= 0.0)) {
            return bad("passive load must be non-negative".into());
        }
        Ok(())
    }

    pub fn n_ewh(&self) -> usize {
        self.ewh_groups.len()
    }

    pub fn n_binaries(&self) -> usize {
        self.ewh_groups.len() * self.steps
    }

    pub fn pv_total(&self, k: usize) -> f64 {
        self.pv_groups.iter().map(|g| g.available[k]).sum()
    }

    /// Transformer flow at step `k` for heater power `ewh_kw`, before shedding.
    pub fn net_flow(&self, k: usize, ewh_kw: f64) -> f64 {
        self.baseline_load[k] - self.pv_total(k) + ewh_kw
    }

    /// Cheapest shed at step `k` given heater power, or the overload if
    /// the forward limit is exceeded.
    pub fn required_shed(&self, k: usize, ewh_kw: f64) -> std::result::Result<f64, f64> {
        let net = self.net_flow(k, ewh_kw);
        if net > self.p_max + FEAS_TOL {
            return Err(net - self.p_max);
        }
        Ok((self.p_min - net).max(0.0).min(self.pv_total(k)))
    }

    /// Least charge needed at each state index `0..=steps` so that later
    /// draws and the terminal requirement can still be met with the heater
    /// on whenever needed.
    pub fn soc_floor(&self, group: usize) -> Vec<f64> {
        let g = &self.ewh_groups[group];
        let mut req = vec![0.0; self.steps + 1];
        req[self.steps] = g.terminal_min;
        for k in (0..self.steps).rev() {
            req[k] = (req[k + 1] + g.draws[k] - g.rating * self.dt).max(0.0);
        }
        req
    }

    /// Completes an on/off matrix `b[group][step]` with the cheapest shed
    /// and returns the full solution, or the first violated constraint.
    pub fn evaluate(&self, b: &[Vec<bool>]) -> std::result::Result<DispatchSolution, Violation> {
        let n = self.steps;
        let mut soc = Vec::with_capacity(self.ewh_groups.len());
        for (i, g) in self.ewh_groups.iter().enumerate() {
            let mut traj = Vec::with_capacity(n + 1);
            traj.push(g.soc0);
            let mut x = g.soc0;
            for k in 0..n {
                x = soc_step(x, g.rating, b[i][k], self.dt, g.draws[k]).soc;
                if x < -FEAS_TOL {
                    return Err(Violation::SocLow { group: i, step: k + 1 });
                }
                if x > g.soc_max + FEAS_TOL {
                    return Err(Violation::SocHigh { group: i, step: k + 1 });
                }
                traj.push(x);
            }
            if x < g.terminal_min - FEAS_TOL {
                return Err(Violation::Terminal { group: i });
            }
            soc.push(traj);
        }

        let mut shed = vec![vec![0.0; n]; self.pv_groups.len()];
        for k in 0..n {
            let e: f64 = self.ewh_power(b, k);
            let total = self
                .required_shed(k, e)
                .map_err(|excess| Violation::TransformerUpper { step: k, excess })?;
            if total > 0.0 {
                self.split_shed(k, total, &mut shed);
            }
        }

        let (s_on, s_off) = switch_actions(self, b);
        let objective = self.objective(b, &shed, &s_on, &s_off);
        Ok(DispatchSolution {
            b: b.to_vec(),
            shed,
            s_on,
            s_off,
            soc,
            objective,
            lower_bound: f64::NEG_INFINITY,
            status: SolveStatus::Heuristic,
        })
    }

    pub(crate) fn ewh_power(&self, b: &[Vec<bool>], k: usize) -> f64 {
        self.ewh_groups
            .iter()
            .zip(b)
            .filter(|(_, row)| row[k])
            .map(|(g, _)| g.rating)
            .sum()
    }

    /// Spreads `total` over the PV groups in proportion to their output.
    pub(crate) fn split_shed(&self, k: usize, total: f64, shed: &mut [Vec<f64>]) {
        let pv = self.pv_total(k);
        let mut left = total;
        let last = self.pv_groups.iter().rposition(|g| g.available[k] > 0.0);
        for (s, g) in self.pv_groups.iter().enumerate() {
            let avail = g.available[k];
            if avail <= 0.0 {
                continue;
            }
            let share = if Some(s) == last {
                left.min(avail)
            } else {
                (total * avail / pv).min(avail).min(left)
            };
            shed[s][k] = share;
            left -= share;
        }
    }

    /// Objective of a complete assignment, summed in a fixed order.
    pub fn objective(&self, b: &[Vec<bool>], shed: &[Vec<f64>], s_on: &[Vec<f64>], s_off: &[Vec<f64>]) -> f64 {
        let mut energy = 0.0;
        for (g, row) in self.ewh_groups.iter().zip(b) {
            for k in 0..self.steps {
                if row[k] {
                    energy += self.spot[k] * g.rating * self.dt;
                }
            }
        }
        let shed_kwh: f64 = shed.iter().flatten().sum::<f64>() * self.dt;
        let actions: f64 = s_on.iter().flatten().sum::<f64>() + s_off.iter().flatten().sum::<f64>();
        energy + self.shed_cost * shed_kwh + self.switch_cost * actions
    }

    /// The problem restricted to steps `start..`, with the given storage
    /// and switching state at `start`.
    pub fn tail(&self, start: usize, soc0: &[f64], prev_on: &[bool]) -> Result<DispatchProblem> {
        if start >= self.steps || soc0.len() != self.n_ewh() || prev_on.len() != self.n_ewh() {
            return Err(Error::InvalidInput(format!("bad tail start {start}")));
        }
        let mut p = self.clone();
        p.steps = self.steps - start;
        p.spot = self.spot[start..].to_vec();
        p.baseline_load = self.baseline_load[start..].to_vec();
        for (i, g) in p.ewh_groups.iter_mut().enumerate() {
            g.draws = g.draws[start..].to_vec();
            g.soc0 = soc0[i].clamp(0.0, g.soc_max);
            g.initial_on = prev_on[i];
        }
        for g in p.pv_groups.iter_mut() {
            g.available = g.available[start..].to_vec();
        }
        Ok(p)
    }

    /// Human-readable reason why no on/off matrix is feasible, if one of
    /// the simple necessary conditions fails.
    pub fn diagnose(&self) -> Option<String> {
        for (i, g) in self.ewh_groups.iter().enumerate() {
            let floor = self.soc_floor(i);
            if g.soc0 < floor[0] - FEAS_TOL {
                return Some(format!(
                    "heater group {i}: state of charge {:.3} kWh cannot cover the draws (needs {:.3})",
                    g.soc0, floor[0]
                ));
            }
            if g.terminal_min > g.soc_max + FEAS_TOL {
                return Some(format!("heater group {i}: terminal charge exceeds capacity"));
            }
            // never switching on must not overfill; draws only lower the charge
        }
        for k in 0..self.steps {
            if self.net_flow(k, 0.0) > self.p_max + FEAS_TOL {
                return Some(format!(
                    "transformer forward limit exceeded at step {k} with every heater off"
                ));
            }
        }
        None
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: DispatchProblem = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

pub(crate) fn switch_actions(p: &DispatchProblem, b: &[Vec<bool>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut on = vec![vec![0.0; p.steps]; b.len()];
    let mut off = vec![vec![0.0; p.steps]; b.len()];
    for (i, row) in b.iter().enumerate() {
        let mut prev = p.ewh_groups[i].initial_on;
        for k in 0..p.steps {
            match (prev, row[k]) {
                (false, true) => on[i][k] = 1.0,
                (true, false) => off[i][k] = 1.0,
                _ => {}
            }
            prev = row[k];
        }
    }
    (on, off)
}

/// Round-robin assignment of `n` items, in the given order, to `groups`.
pub fn round_robin(order: &[usize], groups: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); groups];
    for (pos, &item) in order.iter().enumerate() {
        out[pos % groups].push(item);
    }
    out
}

/// Everything needed to build one day's problem.
#[derive(Debug, Clone)]
pub struct DayInputs {
    pub fleet: Vec<Ewh>,
    pub plants: Vec<PvPlant>,
    /// Available output per plant and step, kW.
    pub pv_kw: Vec<Vec<f64>>,
    pub load_kw: Vec<f64>,
    /// EUR/kWh per step.
    pub spot: Vec<f64>,
    pub draw_profile: DrawProfile,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispatchOptions {
    pub ewh_groups: usize,
    pub pv_groups: usize,
    pub shed_cost: f64,
    pub switch_cost: f64,
    pub initial_on: bool,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            ewh_groups: 20,
            pv_groups: 20,
            shed_cost: DEFAULT_SHED_COST,
            switch_cost: 0.0,
            initial_on: false,
        }
    }
}

/// Groups heaters and plants round-robin along the feeder and sums their
/// ratings, draws and storage. A PV group is rampable only when it holds a
/// single rampable plant; larger groups are switched on or off as a whole.
pub fn build_problem(inputs: &DayInputs, options: &DispatchOptions) -> Result<DispatchProblem> {
    let n = inputs.load_kw.len();
    if options.ewh_groups == 0 || options.pv_groups == 0 {
        return Err(Error::InvalidInput("group counts must be at least one".into()));
    }
    if options.ewh_groups > inputs.fleet.len().max(1) || options.pv_groups > inputs.plants.len().max(1) {
        return Err(Error::InvalidInput(format!(
            "{} heater / {} PV groups for {} heaters and {} plants",
            options.ewh_groups,
            options.pv_groups,
            inputs.fleet.len(),
            inputs.plants.len()
        )));
    }
    if inputs.pv_kw.len() != inputs.plants.len() || inputs.pv_kw.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("PV series must cover every plant and step".into()));
    }

    let mut ewh_order: Vec<usize> = (0..inputs.fleet.len()).collect();
    ewh_order.sort_by_key(|&i| (inputs.fleet[i].bus, inputs.fleet[i].id));
    let ewh_groups = round_robin(&ewh_order, options.ewh_groups)
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|members| {
            let heaters: Vec<&Ewh> = members.iter().map(|&i| &inputs.fleet[i]).collect();
            let draws = (0..n)
                .map(|k| {
                    heaters
                        .iter()
                        .map(|h| inputs.draw_profile.draw_at(k, h.households))
                        .sum()
                })
                .collect();
            EwhGroup {
                rating: heaters.iter().map(|h| h.power_rating).sum(),
                soc0: heaters.iter().map(|h| h.soc).sum(),
                soc_max: heaters.iter().map(|h| h.soc_max).sum(),
                draws,
                // first step of the following day
                terminal_min: heaters
                    .iter()
                    .map(|h| inputs.draw_profile.draw_at(0, h.households))
                    .sum(),
                initial_on: options.initial_on,
                members: heaters.iter().map(|h| h.id).collect(),
            }
        })
        .collect();

    let mut pv_order: Vec<usize> = (0..inputs.plants.len()).collect();
    pv_order.sort_by_key(|&i| (inputs.plants[i].bus, inputs.plants[i].id));
    let pv_groups = round_robin(&pv_order, options.pv_groups)
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|members| PvGroup {
            rampable: members.len() == 1 && inputs.plants[members[0]].rampable,
            available: (0..n)
                .map(|k| members.iter().map(|&p| inputs.pv_kw[p][k]).sum())
                .collect(),
            plants: members,
        })
        .collect();

    let problem = DispatchProblem {
        steps: n,
        dt: STEP_HOURS,
        spot: inputs.spot.clone(),
        shed_cost: options.shed_cost,
        switch_cost: options.switch_cost,
        ewh_groups,
        pv_groups,
        p_min: inputs.p_min,
        p_max: inputs.p_max,
        baseline_load: inputs.load_kw.clone(),
    };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{DrawProfile, Ewh, PvPlant};

    fn inputs(n_ewh: usize, n_pv: usize) -> DayInputs {
        let fleet = (0..n_ewh)
            .map(|i| Ewh::new(i, i + 1, 4.5, 9.0, 18.0, 10).unwrap())
            .collect();
        let plants = (0..n_pv).map(|i| PvPlant::new(i, i + 1, 8.0).unwrap()).collect();
        DayInputs {
            fleet,
            plants,
            pv_kw: vec![vec![1.0; 144]; n_pv],
            load_kw: vec![10.0; 144],
            spot: vec![0.05; 144],
            draw_profile: DrawProfile::default(),
            p_min: -100.0,
            p_max: 220.0,
        }
    }

    #[test]
    fn identity_grouping() {
        let p = build_problem(&inputs(20, 20), &DispatchOptions::default()).unwrap();
        assert_eq!(p.ewh_groups.len(), 20);
        assert!(p.ewh_groups.iter().enumerate().all(|(i, g)| g.members == vec![i]));
        assert!(p.pv_groups.iter().all(|g| g.rampable));
    }

    #[test]
    fn two_groups_alternate() {
        let opts = DispatchOptions {
            ewh_groups: 2,
            pv_groups: 4,
            ..Default::default()
        };
        let p = build_problem(&inputs(20, 20), &opts).unwrap();
        assert_eq!(p.ewh_groups[0].members, vec![0, 2, 4, 6, 8, 10, 12, 14, 16, 18]);
        assert_eq!(p.ewh_groups[1].members.len(), 10);
        assert!((p.ewh_groups[0].rating - 45.0).abs() < 1e-12);
        assert!((p.ewh_groups[0].soc_max - 180.0).abs() < 1e-12);
        let day: f64 = p.ewh_groups[0].draws.iter().sum();
        assert!((day - 103.0).abs() < 1e-9);
        assert_eq!(p.pv_groups.len(), 4);
        assert!(p.pv_groups.iter().all(|g| g.plants.len() == 5 && !g.rampable));
    }

    #[test]
    fn zero_groups_rejected() {
        let opts = DispatchOptions {
            ewh_groups: 0,
            ..Default::default()
        };
        assert!(build_problem(&inputs(4, 4), &opts).is_err());
    }

    #[test]
    fn shed_split_is_proportional() {
        let mut inp = inputs(1, 2);
        inp.pv_kw = vec![vec![60.0; 144], vec![20.0; 144]];
        inp.load_kw = vec![0.0; 144];
        inp.p_min = -40.0;
        inp.draw_profile = DrawProfile::uniform(0.0);
        let p = build_problem(
            &inp,
            &DispatchOptions {
                ewh_groups: 1,
                pv_groups: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let mut b = vec![vec![false; 144]];
        b[0][0] = true;
        let sol = p.evaluate(&b).unwrap();
        // 80 kW of PV against a 40 kW export limit
        assert!((sol.shed[0][5] - 30.0).abs() < 1e-12 && (sol.shed[1][5] - 10.0).abs() < 1e-12);
        assert!((sol.shed[0][0] + sol.shed[1][0] - 35.5).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let p = build_problem(
            &inputs(3, 3),
            &DispatchOptions {
                ewh_groups: 3,
                pv_groups: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let back = DispatchProblem::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
    }
}
