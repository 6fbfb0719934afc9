//! The water-heater and curtailment dispatch model and its solvers.
//!
//! [`build_problem`] groups assets into a [`DispatchProblem`]. Three
//! solvers return a [`DispatchSolution`]: [`solve_exact`] enumerates small
//! instances, [`solve_bnb`] runs LP-based branch and bound, and
//! [`solve_heuristic`] does coordinate descent with a Lagrangian bound.
//! [`check_feasible`] recomputes every constraint of a solution and
//! [`apply_shedding`] turns a planned shed into per-plant curtailment.

mod bnb;
mod exact;
mod heuristic;
pub mod lp;
mod problem;
mod shedding;
mod solution;

use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use bnb::{solve_bnb, BnbOptions};
pub use exact::{solve_exact, MAX_EXACT_BINARIES};
pub use heuristic::{lagrangian_bound, solve_heuristic, solve_heuristic_from, solve_heuristic_with, HeuristicOptions};
pub(crate) use problem::switch_actions;
pub use problem::{
    build_problem, round_robin, DayInputs, DispatchOptions, DispatchProblem, EwhGroup, PvGroup, Violation,
    DEFAULT_SHED_COST, FEAS_TOL, FEED_IN_TARIFF, SHED_COMPENSATION, STEP_HOURS,
};
pub use shedding::{apply_shedding, Curtailment};
pub use solution::{check_feasible, DispatchSolution, FeasibilityReport, Residual, SolveStatus};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Bnb,
    #[default]
    Heuristic,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "bnb" => Ok(SolverKind::Bnb),
            "heuristic" => Ok(SolverKind::Heuristic),
            other => Err(Error::InvalidInput(format!(
                "unknown solver {other:?} (exact, bnb, heuristic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub gap_tol: f64,
    /// Seconds.
    pub time_limit: Option<f64>,
    /// Compute the Lagrangian bound for heuristic solutions.
    pub heuristic_bound: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: SolverKind::Heuristic,
            gap_tol: 1e-4,
            time_limit: None,
            heuristic_bound: false,
        }
    }
}

impl SolverOptions {
    pub fn with_kind(kind: SolverKind) -> Self {
        SolverOptions {
            kind,
            ..Default::default()
        }
    }
}

pub fn solve(p: &DispatchProblem, opts: &SolverOptions) -> Result<DispatchSolution> {
    solve_from(p, None, opts)
}

/// [`solve`] with a starting schedule for the heuristic; the exact solvers
/// ignore it.
pub fn solve_from(p: &DispatchProblem, start: Option<&[Vec<bool>]>, opts: &SolverOptions) -> Result<DispatchSolution> {
    match opts.kind {
        SolverKind::Exact => solve_exact(p),
        SolverKind::Bnb => solve_bnb(
            p,
            &BnbOptions {
                gap_tol: opts.gap_tol,
                time_limit: opts.time_limit.map(Duration::from_secs_f64),
                warm_start: true,
            },
        ),
        SolverKind::Heuristic => solve_heuristic_from(
            p,
            start,
            &HeuristicOptions {
                bound_iterations: if opts.heuristic_bound { 40 } else { 0 },
                ..Default::default()
            },
        ),
    }
}
