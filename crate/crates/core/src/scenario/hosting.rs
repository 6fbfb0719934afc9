use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::ScenarioData;
use super::run::{day_problem, plan_day, verify_day, Control, RunSettings};
use crate::dispatch::{DispatchOptions, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::dachcz_kwp_per_household;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HostingMethod {
    /// Zero load, every plant at its rated power.
    Dachcz,
    /// Measured load and PV, heaters charging by price only.
    Correlation,
    /// Measured load and PV with the dispatch and PV shedding active.
    Dr,
}

impl std::str::FromStr for HostingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dachcz" => Ok(HostingMethod::Dachcz),
            "correlation" => Ok(HostingMethod::Correlation),
            "dr" => Ok(HostingMethod::Dr),
            other => Err(Error::InvalidInput(format!(
                "unknown method {other:?} (dachcz, correlation, dr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HostingOptions {
    /// Bisection stops once the bracket is this narrow, in penetration.
    pub tolerance: f64,
    /// Upper end of the search; reaching it sets the `capped` flag.
    pub max_penetration: f64,
    /// When set, a DR day that plans more shed than this, kWh, also fails.
    pub max_shed_kwh: Option<f64>,
    pub dispatch: DispatchOptions,
    pub solver: SolverOptions,
}

impl Default for HostingOptions {
    fn default() -> Self {
        HostingOptions {
            tolerance: 1e-3,
            max_penetration: 4.0,
            max_shed_kwh: None,
            dispatch: DispatchOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HostingResult {
    pub method: HostingMethod,
    pub penetration: f64,
    pub kwp_per_household: f64,
    /// The search hit `max_penetration` without a failure.
    pub capped: bool,
    pub evaluations: usize,
    /// Day that failed just above the reported capacity.
    pub limiting_day: Option<NaiveDate>,
}

/// Outcome of checking one penetration level.
#[derive(Debug, Clone, Serialize)]
pub struct HostingCheck {
    pub ok: bool,
    pub failed_day: Option<NaiveDate>,
    pub reason: Option<String>,
}

/// Whether `penetration` passes under `method` on every scenario day.
pub fn check_penetration(
    scenario: &ScenarioData,
    method: HostingMethod,
    penetration: f64,
    opts: &HostingOptions,
) -> Result<HostingCheck> {
    if method == HostingMethod::Dachcz {
        return Err(Error::InvalidInput("the DACHCZ check does not use day data".into()));
    }
    let control = if method == HostingMethod::Dr {
        Control::Dispatch
    } else {
        Control::PriceOnly
    };
    let settings = RunSettings {
        penetration,
        control,
        dispatch: opts.dispatch.clone(),
        solver: opts.solver.clone(),
    };
    let kwp = scenario.kwp_per_household(penetration);
    let failures: Vec<Option<(usize, String)>> = (0..scenario.days.len())
        .into_par_iter()
        .map(|pos| -> Result<Option<(usize, String)>> {
            let problem = day_problem(scenario, pos, &settings)?;
            let plan = match plan_day(&problem, control, &settings.solver) {
                Ok(p) => p,
                Err(Error::Infeasible(why)) => return Ok(Some((pos, format!("dispatch infeasible: {why}")))),
                Err(e) => return Err(e),
            };
            let shed = plan.shed_kwh(problem.dt);
            if opts.max_shed_kwh.is_some_and(|max| shed > max) {
                return Ok(Some((pos, format!("{shed:.3} kWh shed"))));
            }
            let (_, sim) = verify_day(scenario, pos, kwp, &problem, &plan, control)?;
            Ok((sim.violation_minutes > 0).then(|| {
                (
                    pos,
                    format!(
                        "{} violation minutes, peak rise {:.3} %",
                        sim.violation_minutes,
                        sim.peak_rise()
                    ),
                )
            }))
        })
        .collect::<Result<_>>()?;
    let first = failures.into_iter().flatten().next();
    Ok(match first {
        None => HostingCheck {
            ok: true,
            failed_day: None,
            reason: None,
        },
        Some((pos, why)) => HostingCheck {
            ok: false,
            failed_day: Some(scenario.days[pos].date),
            reason: Some(why),
        },
    })
}

/// Largest uniform PV penetration without voltage-rise violations.
///
/// DACHCZ is solved directly on the feeder. The other two methods bisect
/// on penetration: starting from 50 %, the upper end doubles until a level
/// fails or `max_penetration` is reached.
pub fn hosting_capacity(
    scenario: &ScenarioData,
    method: HostingMethod,
    opts: &HostingOptions,
) -> Result<HostingResult> {
    if method == HostingMethod::Dachcz {
        let kwp_tol = scenario.kwp_per_household(opts.tolerance) * 0.1;
        let kwp = dachcz_kwp_per_household(&scenario.feeder, kwp_tol)?;
        let capped = !kwp.is_finite() || scenario.penetration(kwp) > opts.max_penetration;
        let penetration = if capped {
            opts.max_penetration
        } else {
            scenario.penetration(kwp)
        };
        return Ok(HostingResult {
            method,
            penetration,
            kwp_per_household: scenario.kwp_per_household(penetration),
            capped,
            evaluations: 0,
            limiting_day: None,
        });
    }
    let mut evaluations = 0;
    let mut check = |pen: f64| -> Result<HostingCheck> {
        evaluations += 1;
        let c = check_penetration(scenario, method, pen, opts)?;
        log::debug!("{method:?} at {:.4}: {:?}", pen, c.reason);
        Ok(c)
    };
    let (mut lo, mut hi) = (0.0, 0.5f64.min(opts.max_penetration));
    let mut limiting;
    loop {
        let c = check(hi)?;
        if !c.ok {
            limiting = c.failed_day;
            break;
        }
        lo = hi;
        if hi >= opts.max_penetration {
            return Ok(HostingResult {
                method,
                penetration: hi,
                kwp_per_household: scenario.kwp_per_household(hi),
                capped: true,
                evaluations,
                limiting_day: None,
            });
        }
        hi = (hi * 2.0).min(opts.max_penetration);
    }
    while hi - lo > opts.tolerance {
        let mid = 0.5 * (lo + hi);
        let c = check(mid)?;
        if c.ok {
            lo = mid;
        } else {
            hi = mid;
            limiting = c.failed_day;
        }
    }
    Ok(HostingResult {
        method,
        penetration: lo,
        kwp_per_household: scenario.kwp_per_household(lo),
        capped: false,
        evaluations,
        limiting_day: limiting,
    })
}
