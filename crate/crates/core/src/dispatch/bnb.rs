use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use super::heuristic::{solve_heuristic_with, HeuristicOptions};
use super::lp::{Basis, DualSimplex, LpModel, LpStatus};
use super::problem::DispatchProblem;
use super::solution::{DispatchSolution, SolveStatus};
use crate::error::{Error, Result};

const INT_TOL: f64 = 1e-6;
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BnbOptions {
    /// Relative gap at which the search stops.
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    /// Seed the incumbent with the coordinate-descent heuristic.
    pub warm_start: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            gap_tol: 1e-4,
            time_limit: None,
            warm_start: true,
        }
    }
}

/// LP relaxation of the dispatch model.
///
/// Columns: `b[i][k]` in `[0, 1]`, one aggregate shed per step, and when
/// switching is penalized `on[i][k]`, `off[i][k]` in `[0, 1]`. Rows: the
/// transformer range per step, the charge range per group and state index
/// written as a prefix sum of charging steps, and the switching balance.
pub(crate) struct DispatchLp {
    pub model: LpModel,
    pub steps: usize,
}

impl DispatchLp {
    pub fn new(p: &DispatchProblem) -> Self {
        let n = p.steps;
        let mut lp = LpModel::default();
        let trafo: Vec<usize> = (0..n)
            .map(|k| {
                let base = p.net_flow(k, 0.0);
                lp.add_row(p.p_min - base, p.p_max - base)
            })
            .collect();
        let mut soc_rows = Vec::with_capacity(p.n_ewh());
        for g in &p.ewh_groups {
            let mut drawn = 0.0;
            let rows: Vec<usize> = (1..=n)
                .map(|k| {
                    drawn += g.draws[k - 1];
                    let lo = if k == n {
                        drawn + g.terminal_min - g.soc0
                    } else {
                        drawn - g.soc0
                    };
                    lp.add_row(lo, g.soc_max + drawn - g.soc0)
                })
                .collect();
            soc_rows.push(rows);
        }
        let penalized = p.switch_cost > 0.0;
        let sw_rows: Vec<Vec<usize>> = if penalized {
            p.ewh_groups
                .iter()
                .map(|g| {
                    (0..n)
                        .map(|k| {
                            let rhs = if k == 0 && g.initial_on { 1.0 } else { 0.0 };
                            lp.add_row(rhs, rhs)
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };

        for (i, g) in p.ewh_groups.iter().enumerate() {
            for k in 0..n {
                let mut entries = vec![(trafo[k], g.rating)];
                entries.extend(soc_rows[i][k..].iter().map(|&r| (r, g.rating * p.dt)));
                if penalized {
                    entries.push((sw_rows[i][k], 1.0));
                    if k + 1 < n {
                        entries.push((sw_rows[i][k + 1], -1.0));
                    }
                }
                lp.add_col(p.spot[k] * g.rating * p.dt, 0.0, 1.0, entries);
            }
        }
        for (k, &row) in trafo.iter().enumerate() {
            lp.add_col(p.shed_cost * p.dt, 0.0, p.pv_total(k), vec![(row, 1.0)]);
        }
        if penalized {
            for rows in &sw_rows {
                for &row in rows {
                    lp.add_col(p.switch_cost, 0.0, 1.0, vec![(row, -1.0)]);
                    lp.add_col(p.switch_cost, 0.0, 1.0, vec![(row, 1.0)]);
                }
            }
        }
        DispatchLp { model: lp, steps: n }
    }

    /// Column of `b[i][k]`.
    pub fn b_col(&self, i: usize, k: usize) -> usize {
        i * self.steps + k
    }
}

struct Node {
    bound: f64,
    id: u64,
    parent: u64,
    fix: Rc<Vec<i8>>,
    /// Binary fixed last, relative to the parent.
    branched: Option<(usize, bool)>,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: the smallest bound, then the oldest node, comes first
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

/// Best-first branch and bound on the heater binaries with LP bounds.
///
/// The incumbent starts from the coordinate-descent heuristic and is
/// improved by rounding every node's relaxation. Nodes branch on the most
/// fractional binary, the "on" child first; the dual simplex restarts from
/// the parent basis after each bound change.
pub fn solve_bnb(p: &DispatchProblem, opts: &BnbOptions) -> Result<DispatchSolution> {
    p.validate()?;
    let start = Instant::now();
    let (ni, n) = (p.n_ewh(), p.steps);
    let nb = ni * n;
    let lp = DispatchLp::new(p);
    let max_iter = 50 * (lp.model.n_rows() + lp.model.n_cols()) + 1000;

    let mut incumbent: Option<DispatchSolution> = None;
    if opts.warm_start {
        let h = HeuristicOptions {
            bound_iterations: 0,
            ..Default::default()
        };
        incumbent = solve_heuristic_with(p, &h).ok();
    }
    let try_incumbent = |b: Vec<Vec<bool>>, inc: &mut Option<DispatchSolution>| {
        if let Ok(sol) = p.evaluate(&b) {
            if inc.as_ref().is_none_or(|s| sol.objective < s.objective - 1e-12) {
                *inc = Some(sol);
            }
        }
    };

    let mut simplex = DualSimplex::new(&lp.model)?;
    let mut loaded: u64 = u64::MAX;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        id: 0,
        parent: u64::MAX,
        fix: Rc::new(vec![-1; nb]),
        branched: None,
        basis: None,
    });
    let mut next_id = 1;
    let mut root_infeasible = false;
    let mut timed_out = false;
    let mut lower = f64::NEG_INFINITY;

    while let Some(node) = heap.pop() {
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective);
        lower = node.bound;
        if node.bound >= inc_obj - PRUNE_TOL {
            lower = inc_obj;
            heap.clear();
            break;
        }
        if (inc_obj - node.bound) <= opts.gap_tol * inc_obj.abs().max(1.0) {
            heap.push(node);
            break;
        }
        if opts.time_limit.is_some_and(|t| start.elapsed() > t) {
            heap.push(node);
            timed_out = true;
            break;
        }

        if node.parent == loaded && node.basis.is_some() {
            let (j, on) = node.branched.expect("child nodes record their branch");
            let v = on as i32 as f64;
            simplex.set_bounds(j, v, v);
        } else {
            if let Some(basis) = &node.basis {
                simplex.restore(basis);
            }
            for (j, &f) in node.fix.iter().enumerate() {
                match f {
                    0 => simplex.set_bounds(j, 0.0, 0.0),
                    1 => simplex.set_bounds(j, 1.0, 1.0),
                    _ => simplex.set_bounds(j, 0.0, 1.0),
                }
            }
        }
        let status = simplex.solve(max_iter)?;
        loaded = node.id;
        match status {
            LpStatus::Infeasible => {
                if node.id == 0 {
                    root_infeasible = true;
                }
                continue;
            }
            LpStatus::IterationLimit => return Err(Error::Lp("simplex iteration limit reached".into())),
            LpStatus::Optimal => {}
        }
        let obj = simplex.objective().max(node.bound);
        if obj >= inc_obj - PRUNE_TOL {
            continue;
        }
        let x = simplex.primal();
        let mut branch: Option<(usize, f64)> = None;
        for j in 0..nb {
            let f = x[j] - x[j].floor();
            let dist = f.min(1.0 - f);
            if dist > INT_TOL && branch.is_none_or(|(_, d)| dist > d + 1e-12) {
                branch = Some((j, dist));
            }
        }
        let to_b = |pick: &dyn Fn(f64) -> bool| -> Vec<Vec<bool>> {
            (0..ni)
                .map(|i| (0..n).map(|k| pick(x[lp.b_col(i, k)])).collect())
                .collect()
        };
        let Some((j, _)) = branch else {
            try_incumbent(to_b(&|v| v > 0.5), &mut incumbent);
            continue;
        };
        try_incumbent(to_b(&|v| v > 0.5), &mut incumbent);
        try_incumbent(to_b(&|v| v > INT_TOL), &mut incumbent);

        let basis = Rc::new(simplex.snapshot());
        for on in [true, false] {
            let mut fix = (*node.fix).clone();
            fix[j] = on as i8;
            heap.push(Node {
                bound: obj,
                id: next_id,
                parent: node.id,
                fix: Rc::new(fix),
                branched: Some((j, on)),
                basis: Some(basis.clone()),
            });
            next_id += 1;
        }
    }

    let Some(mut sol) = incumbent else {
        if timed_out {
            return Err(Error::SolverLimit(
                "time limit reached before any feasible schedule was found".into(),
            ));
        }
        let why = p.diagnose().unwrap_or_else(|| {
            if root_infeasible {
                "LP relaxation is infeasible".into()
            } else {
                "no switching pattern meets all constraints".into()
            }
        });
        return Err(Error::Infeasible(why));
    };
    if heap.is_empty() {
        lower = sol.objective;
    }
    sol.lower_bound = lower.min(sol.objective);
    let gap = sol.gap();
    sol.status = if !timed_out && gap <= opts.gap_tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::Gap(gap)
    };
    log::debug!(
        "branch and bound: {} nodes, {} simplex iterations, gap {gap:.2e}",
        next_id,
        simplex.iterations
    );
    Ok(sol)
}
