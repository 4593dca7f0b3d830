//! Problem domains: course assignment (CAP), vehicle routing (VRP), task
//! assignment (TAP) and nurse scheduling (NSP).

pub mod cap;
pub mod nsp;
pub mod tap;
pub mod text;
pub mod vrp;
pub mod vrp_search;

use serde::{Deserialize, Serialize};
use tempfair_milp::{linearize_gap, linearize_minimax, LinExpr, LinearModel, VarId};

pub use cap::{cap_check, cap_enumerate, cap_quality, cap_utilities, CapInstance, CapSolution};
pub use nsp::{nsp_check, nsp_enumerate, nsp_quality, nsp_utilities, NspInstance, NspSolution};
pub use tap::{
    tap_build_ip, tap_check, tap_enumerate, tap_heuristic, tap_hungarian, tap_plan_objective, tap_threshold_candidates,
    tap_utilities, TapInstance, TapIp, TapSolution,
};
pub use vrp_search::{vrp_partition_search, RouteFairness, RouteSearchStats};
pub use vrp::{vrp_build_ip, vrp_check, vrp_enumerate, vrp_route_lengths, VrpInstance, VrpIp, VrpSeparator, VrpSolution};

use crate::error::{CoreError, Result};
use crate::fairness::MetricKind;

/// One time step's problem data.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainInstance {
    /// A course assignment instance viewed at one of its time steps.
    Cap { instance: CapInstance, step: usize },
    Vrp(VrpInstance),
    Tap(TapInstance),
    Nsp(NspInstance),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Solution {
    Cap(CapSolution),
    Vrp(VrpSolution),
    Tap(TapSolution),
    Nsp(NspSolution),
}

impl DomainInstance {
    /// One entry per time step of a course assignment instance.
    pub fn cap_steps(instance: &CapInstance) -> Vec<DomainInstance> {
        (0..instance.steps())
            .map(|step| DomainInstance::Cap {
                instance: instance.clone(),
                step,
            })
            .collect()
    }

    pub fn domain(&self) -> &'static str {
        match self {
            DomainInstance::Cap { .. } => "cap",
            DomainInstance::Vrp(_) => "vrp",
            DomainInstance::Tap(_) => "tap",
            DomainInstance::Nsp(_) => "nsp",
        }
    }

    pub fn entities(&self) -> Vec<String> {
        match self {
            DomainInstance::Cap { instance, .. } => instance.lecturers.clone(),
            DomainInstance::Vrp(i) => i.vehicles.clone(),
            DomainInstance::Tap(i) => i.agents.clone(),
            DomainInstance::Nsp(i) => i.nurses.clone(),
        }
    }

    /// Costs (VRP distance, TAP cost) enter the maximised objective negated.
    pub fn quality(&self, sol: &Solution) -> Result<f64> {
        Ok(match (self, sol) {
            (DomainInstance::Cap { instance, .. }, Solution::Cap(s)) => cap_quality(instance, s),
            (DomainInstance::Vrp(i), Solution::Vrp(s)) => -vrp_route_lengths(i, s).iter().sum::<f64>(),
            (DomainInstance::Tap(i), Solution::Tap(s)) => -tap_utilities(i, s).iter().sum::<f64>(),
            (DomainInstance::Nsp(i), Solution::Nsp(s)) => nsp_quality(i, s),
            _ => return Err(mismatch()),
        })
    }

    pub fn utilities(&self, sol: &Solution) -> Result<Vec<f64>> {
        match (self, sol) {
            (DomainInstance::Cap { instance, .. }, Solution::Cap(s)) => cap_utilities(instance, s),
            (DomainInstance::Vrp(i), Solution::Vrp(s)) => Ok(vrp_route_lengths(i, s)),
            (DomainInstance::Tap(i), Solution::Tap(s)) => Ok(tap_utilities(i, s)),
            (DomainInstance::Nsp(i), Solution::Nsp(s)) => Ok(nsp_utilities(i, s)),
            _ => Err(mismatch()),
        }
    }

    /// Feasibility check; `step` only labels the error.
    pub fn check(&self, step: usize, sol: &Solution) -> Result<()> {
        match (self, sol) {
            (DomainInstance::Cap { instance, step: s }, Solution::Cap(x)) => {
                cap_check(instance, *s, x).map_err(|e| relabel(e, step))
            }
            (DomainInstance::Vrp(i), Solution::Vrp(x)) => vrp_check(i, step, x),
            (DomainInstance::Tap(i), Solution::Tap(x)) => tap_check(i, step, x),
            (DomainInstance::Nsp(i), Solution::Nsp(x)) => nsp_check(i, step, x),
            _ => Err(mismatch()),
        }
    }

    /// Materialised candidate list in canonical order (not used for NSP,
    /// which is streamed).
    pub fn candidates(&self) -> Result<Vec<Solution>> {
        Ok(match self {
            DomainInstance::Cap { instance, step } => {
                cap_enumerate(instance, *step)?.into_iter().map(Solution::Cap).collect()
            }
            DomainInstance::Vrp(i) => vrp_enumerate(i)?.into_iter().map(Solution::Vrp).collect(),
            DomainInstance::Tap(i) => tap_enumerate(i)?.into_iter().map(Solution::Tap).collect(),
            DomainInstance::Nsp(i) => nsp_enumerate(i).map(Solution::Nsp).collect(),
        })
    }
}

fn relabel(e: CoreError, step: usize) -> CoreError {
    match e {
        CoreError::ConstraintViolation { constraint, .. } => CoreError::ConstraintViolation { step, constraint },
        other => other,
    }
}

fn mismatch() -> CoreError {
    CoreError::Argument("solution belongs to a different domain than the instance".into())
}

/// Objective description shared by the routing and assignment programs.
///
/// The programs minimise `sum_k w_k * cost_k + beta * F` where `F` is the
/// linearised max-min gap or maximum over `offset_e + sum_k w_k * U_{e,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IpObjective {
    pub beta: f64,
    /// Weight of each planned step (`tau^k`).
    pub step_weights: Vec<f64>,
    /// `None` leaves the fairness term out entirely.
    pub fairness: Option<IpFairness>,
    /// Order interchangeable vehicles by utility (routing only).
    pub symmetry_breaking: bool,
    /// Add the per-task lower bounds on the minimax variable (assignment only).
    pub task_bounds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpFairness {
    pub metric: MetricKind,
    /// Discounted historical utility per entity.
    pub offsets: Vec<f64>,
}

impl IpObjective {
    /// Single step, quality only.
    pub fn quality_only() -> Self {
        Self {
            beta: 0.0,
            step_weights: vec![1.0],
            fairness: None,
            symmetry_breaking: true,
            task_bounds: true,
        }
    }

    pub fn with_fairness(beta: f64, step_weights: Vec<f64>, metric: MetricKind, offsets: Vec<f64>) -> Self {
        Self {
            beta,
            step_weights,
            fairness: Some(IpFairness { metric, offsets }),
            symmetry_breaking: true,
            task_bounds: true,
        }
    }

    pub(crate) fn validate(&self, steps: usize, entities: usize) -> Result<()> {
        if self.step_weights.len() != steps {
            return Err(CoreError::Argument(format!(
                "{} step weights for {steps} steps",
                self.step_weights.len()
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(CoreError::Argument("beta must be nonnegative".into()));
        }
        if let Some(f) = &self.fairness {
            if f.offsets.len() != entities {
                return Err(CoreError::Structural(format!(
                    "{} offsets for {entities} entities",
                    f.offsets.len()
                )));
            }
            if !matches!(f.metric, MetricKind::MaxMinGap | MetricKind::MinimaxCost) {
                return Err(CoreError::Argument(format!(
                    "metric '{}' has no linear form; use gap or minimax with the integer program",
                    f.metric
                )));
            }
        }
        Ok(())
    }

    /// Offsets are all equal, so entities are interchangeable w.r.t. fairness.
    pub(crate) fn uniform_offsets(&self) -> bool {
        match &self.fairness {
            None => true,
            Some(f) => f.offsets.windows(2).all(|w| w[0] == w[1]),
        }
    }

    pub(crate) fn fairness_active(&self) -> bool {
        self.fairness.is_some() && self.beta > 0.0
    }

    /// Adds the linearised fairness term; returns the variables it created.
    pub(crate) fn add_fairness(&self, m: &mut LinearModel, utility: &[LinExpr]) -> Result<Vec<VarId>> {
        let Some(f) = self.fairness.as_ref().filter(|_| self.beta > 0.0) else {
            return Ok(Vec::new());
        };
        match f.metric {
            MetricKind::MaxMinGap => {
                let g = linearize_gap(m, utility, &f.offsets);
                m.add_objective_term(g.max, self.beta);
                m.add_objective_term(g.min, -self.beta);
                Ok(vec![g.max, g.min])
            }
            MetricKind::MinimaxCost => {
                let big = linearize_minimax(m, utility, &f.offsets);
                m.add_objective_term(big, self.beta);
                Ok(vec![big])
            }
            other => Err(CoreError::Argument(format!("metric '{other}' has no linear form"))),
        }
    }
}
