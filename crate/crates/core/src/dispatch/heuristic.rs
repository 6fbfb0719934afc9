use super::problem::{DispatchProblem, FEAS_TOL};
use super::solution::{DispatchSolution, SolveStatus};
use crate::error::{Error, Result};

/// Cost per kW over the forward transformer limit while searching.
const OVERLOAD_PENALTY: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicOptions {
    /// Coordinate-descent sweeps over all groups.
    pub max_sweeps: usize,
    /// Subgradient iterations for the Lagrangian bound; 0 skips the bound.
    pub bound_iterations: usize,
}

impl Default for HeuristicOptions {
    fn default() -> Self {
        HeuristicOptions {
            max_sweeps: 50,
            bound_iterations: 40,
        }
    }
}

/// Coordinate descent over heater groups with an exact per-group dynamic
/// program, plus a Lagrangian lower bound.
///
/// With the other groups fixed, the cost of one group's schedule separates
/// by step (energy, marginal shed, switching), and its charge only depends
/// on how many steps it has been on so far. The program over
/// `(step, on-count, previous state)` therefore finds that group's best
/// response exactly. Sweeps repeat until no group changes.
pub fn solve_heuristic(p: &DispatchProblem) -> Result<DispatchSolution> {
    solve_heuristic_with(p, &HeuristicOptions::default())
}

pub fn solve_heuristic_with(p: &DispatchProblem, opts: &HeuristicOptions) -> Result<DispatchSolution> {
    solve_heuristic_from(p, None, opts)
}

/// Like [`solve_heuristic_with`], but the descent starts from `start`. Rows
/// of `start` that break their own group's storage limits are re-planned
/// in the first sweep; the others are kept until a cheaper response exists.
pub fn solve_heuristic_from(
    p: &DispatchProblem,
    start: Option<&[Vec<bool>]>,
    opts: &HeuristicOptions,
) -> Result<DispatchSolution> {
    p.validate()?;
    if let Some(s) = start {
        if s.len() != p.n_ewh() || s.iter().any(|r| r.len() != p.steps) {
            return Err(Error::InvalidInput(format!(
                "start schedule is not {} x {}",
                p.n_ewh(),
                p.steps
            )));
        }
    }
    let b = descend(p, start, opts.max_sweeps)?;
    let mut sol = p
        .evaluate(&b)
        .map_err(|v| Error::Infeasible(format!("{v:?}; {}", p.diagnose().unwrap_or_default())))?;
    if opts.bound_iterations > 0 {
        sol.lower_bound = lagrangian_bound(p, &sol, opts.bound_iterations).min(sol.objective);
    }
    sol.status = SolveStatus::Heuristic;
    Ok(sol)
}

fn shed_at(p: &DispatchProblem, k: usize, ewh_kw: f64) -> f64 {
    let net = p.net_flow(k, ewh_kw);
    let overload = (net - p.p_max).max(0.0);
    p.shed_cost * p.dt * (p.p_min - net).max(0.0).min(p.pv_total(k)) + OVERLOAD_PENALTY * overload
}

/// Whether `row` keeps group `i` between its charge floor and capacity.
fn row_fits(p: &DispatchProblem, i: usize, row: &[bool], floor: &[f64]) -> bool {
    let g = &p.ewh_groups[i];
    let mut soc = g.soc0;
    row.iter().enumerate().all(|(k, &on)| {
        soc += if on { g.rating * p.dt } else { 0.0 } - g.draws[k];
        soc >= floor[k + 1] - FEAS_TOL && soc <= g.soc_max + FEAS_TOL
    })
}

fn descend(p: &DispatchProblem, start: Option<&[Vec<bool>]>, max_sweeps: usize) -> Result<Vec<Vec<bool>>> {
    let (ni, n) = (p.n_ewh(), p.steps);
    let floors: Vec<Vec<f64>> = (0..ni).map(|i| p.soc_floor(i)).collect();
    let mut b = vec![vec![false; n]; ni];
    let mut total: Vec<f64> = vec![0.0; n];
    let mut placed = vec![false; ni];
    if let Some(s) = start {
        for i in 0..ni {
            b[i] = s[i].clone();
            placed[i] = row_fits(p, i, &b[i], &floors[i]);
            for k in 0..n {
                if b[i][k] {
                    total[k] += p.ewh_groups[i].rating;
                }
            }
        }
    }
    for sweep in 0..max_sweeps.max(1) {
        let mut changed = false;
        for i in 0..ni {
            let g = &p.ewh_groups[i];
            let mut on_cost = vec![0.0; n];
            for k in 0..n {
                let others = total[k] - if b[i][k] { g.rating } else { 0.0 };
                on_cost[k] = p.spot[k] * g.rating * p.dt + shed_at(p, k, others + g.rating) - shed_at(p, k, others);
            }
            let Some((cost, row)) = group_dp(p, i, &on_cost, p.switch_cost, &floors[i]) else {
                let why = p
                    .diagnose()
                    .unwrap_or_else(|| format!("heater group {i} has no feasible schedule"));
                return Err(Error::Infeasible(why));
            };
            let current = if placed[i] {
                schedule_cost(p, i, &b[i], &on_cost)
            } else {
                f64::INFINITY
            };
            if cost < current - 1e-12 {
                for k in 0..n {
                    if row[k] != b[i][k] {
                        total[k] += if row[k] { g.rating } else { -g.rating };
                    }
                }
                b[i] = row;
                changed = true;
            }
            placed[i] = true;
        }
        if !changed && sweep > 0 {
            break;
        }
    }
    Ok(b)
}

fn schedule_cost(p: &DispatchProblem, i: usize, row: &[bool], on_cost: &[f64]) -> f64 {
    let mut prev = p.ewh_groups[i].initial_on;
    let mut c = 0.0;
    for (k, &on) in row.iter().enumerate() {
        if on {
            c += on_cost[k];
        }
        if on != prev {
            c += p.switch_cost;
        }
        prev = on;
    }
    c
}

/// Cheapest schedule for group `i` given a per-step cost of being on, a
/// cost per switching action and the charge floor. The charge after `k`
/// steps with `c` of them on is `soc0 + c * rating * dt - draws[..k]`.
fn group_dp(
    p: &DispatchProblem,
    i: usize,
    on_cost: &[f64],
    switch_cost: f64,
    floor: &[f64],
) -> Option<(f64, Vec<bool>)> {
    let g = &p.ewh_groups[i];
    let n = p.steps;
    let unit = g.rating * p.dt;
    let mut drawn = 0.0;
    let mut cur = vec![f64::INFINITY; 2];
    cur[g.initial_on as usize] = 0.0;
    // back[k][state] = predecessor state at step k, state = count * 2 + on
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(n);
    for k in 0..n {
        drawn += g.draws[k];
        let width = (k + 2) * 2;
        let mut next = vec![f64::INFINITY; width];
        let mut bp = vec![u32::MAX; width];
        for (state, &c0) in cur.iter().enumerate() {
            if !c0.is_finite() {
                continue;
            }
            let (count, prev) = (state / 2, state % 2 == 1);
            for on in [false, true] {
                let nc = count + on as usize;
                let soc = g.soc0 + nc as f64 * unit - drawn;
                if soc < floor[k + 1] - FEAS_TOL || soc > g.soc_max + FEAS_TOL {
                    continue;
                }
                let mut c = c0 + if on { on_cost[k] } else { 0.0 };
                if on != prev {
                    c += switch_cost;
                }
                let ns = nc * 2 + on as usize;
                if c < next[ns] {
                    next[ns] = c;
                    bp[ns] = state as u32;
                }
            }
        }
        back.push(bp);
        cur = next;
    }
    let (mut state, &best) = cur
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut row = vec![false; n];
    for k in (0..n).rev() {
        row[k] = state % 2 == 1;
        state = back[k][state] as usize;
    }
    Some((best, row))
}

/// Lower bound from relaxing the coupling between groups.
///
/// The aggregate heater power at each step is replaced by a free copy
/// `e` in `[0, e_max]`, priced by a multiplier. For fixed multipliers the
/// groups decouple into the same dynamic programs as above and the copy
/// has a closed-form minimum over the kinks of the convex shed cost. The
/// multipliers follow projected subgradient steps with a Polyak step size.
pub fn lagrangian_bound(p: &DispatchProblem, incumbent: &DispatchSolution, iterations: usize) -> f64 {
    let (ni, n) = (p.n_ewh(), p.steps);
    let floors: Vec<Vec<f64>> = (0..ni).map(|i| p.soc_floor(i)).collect();
    let fleet: f64 = p.ewh_groups.iter().map(|g| g.rating).sum();
    let mut e_max = vec![0.0; n];
    let mut slack_at_zero = vec![0.0; n];
    for k in 0..n {
        e_max[k] = fleet.min(p.p_max - p.net_flow(k, 0.0));
        if e_max[k] < 0.0 {
            return f64::NEG_INFINITY;
        }
        slack_at_zero[k] = p.p_min - p.net_flow(k, 0.0);
    }
    let shed_cost = |k: usize, e: f64| p.shed_cost * p.dt * (slack_at_zero[k] - e).max(0.0).min(p.pv_total(k));

    let mut lambda: Vec<f64> = (0..n)
        .map(|k| {
            if incumbent.shed_at(k) > 0.0 {
                -p.shed_cost * p.dt
            } else {
                0.0
            }
        })
        .collect();
    let upper = incumbent.objective;
    let mut best = f64::NEG_INFINITY;
    let mut theta = 1.0;
    let mut stall = 0;
    for _ in 0..iterations {
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        for i in 0..ni {
            let g = &p.ewh_groups[i];
            let on_cost: Vec<f64> = (0..n).map(|k| (p.spot[k] * p.dt + lambda[k]) * g.rating).collect();
            let Some((c, row)) = group_dp(p, i, &on_cost, p.switch_cost, &floors[i]) else {
                return f64::NEG_INFINITY;
            };
            value += c;
            for k in 0..n {
                if row[k] {
                    grad[k] += g.rating;
                }
            }
        }
        for k in 0..n {
            let kink = slack_at_zero[k].clamp(0.0, e_max[k]);
            let (e, v) = [0.0, kink, e_max[k]]
                .into_iter()
                .map(|e| (e, shed_cost(k, e) - lambda[k] * e))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("three candidates");
            value += v;
            grad[k] -= e;
        }
        if value > best + 1e-12 {
            best = value;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                theta *= 0.5;
                stall = 0;
            }
        }
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2 < 1e-18 || upper - best <= 1e-12 {
            break;
        }
        let step = theta * (upper - value).max(1e-9) / norm2;
        for k in 0..n {
            lambda[k] += step * grad[k];
        }
    }
    best
}
