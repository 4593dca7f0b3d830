//! The formulation ladder OP, FOP, HFOP, DHFOP, MSDHFOP as one scoring
//! contract, plus exact solvers over it.
//!
//! Everything is maximised: costs (routing distance, assignment cost) enter
//! as negative quality and lower-is-fairer metrics are negated.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tempfair_milp::{branch_and_bound_with, BnbOptions, SolveStatus};

use crate::domains::{
    nsp::nsp_enumerate, nsp_quality, nsp_utilities, tap_build_ip, tap_heuristic, tap_threshold_candidates, tap_utilities, TapSolution, vrp_build_ip, vrp_partition_search, DomainInstance,
    IpObjective, RouteFairness, Solution,
};
use crate::error::{CoreError, Result};
use crate::fairness::{discounted_history, DiscountSpec, History, MetricKind, Orientation, UtilityVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormulationKind {
    Op,
    Fop,
    Hfop,
    Dhfop,
    Msdhfop,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 5] = [
        FormulationKind::Op,
        FormulationKind::Fop,
        FormulationKind::Hfop,
        FormulationKind::Dhfop,
        FormulationKind::Msdhfop,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            FormulationKind::Op => "op",
            FormulationKind::Fop => "fop",
            FormulationKind::Hfop => "hfop",
            FormulationKind::Dhfop => "dhfop",
            FormulationKind::Msdhfop => "msdhfop",
        }
    }

    pub fn uses_history(self) -> bool {
        matches!(self, FormulationKind::Hfop | FormulationKind::Dhfop | FormulationKind::Msdhfop)
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FormulationKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        FormulationKind::ALL
            .into_iter()
            .find(|k| k.tag() == s.to_ascii_lowercase())
            .ok_or_else(|| CoreError::Argument(format!("unknown formulation '{s}' (op, fop, hfop, dhfop, msdhfop)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulationSpec {
    pub kind: FormulationKind,
    pub beta: f64,
    pub disc: DiscountSpec,
    /// Number of planned steps (1 unless MSDHFOP).
    pub horizon: usize,
    pub metric: MetricKind,
    /// Most recent history steps considered; all of them when `None`.
    pub history_window: Option<usize>,
}

impl FormulationSpec {
    /// Validates the combination. Discounts are forced to 1 for OP, FOP and
    /// HFOP; a horizon other than 1 is only accepted for MSDHFOP.
    pub fn new(kind: FormulationKind, beta: f64, disc: DiscountSpec, horizon: usize, metric: MetricKind) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(CoreError::Argument(format!("beta = {beta} must be finite and nonnegative")));
        }
        let disc = DiscountSpec::new(disc.gamma, disc.tau)?;
        if horizon == 0 {
            return Err(CoreError::Argument("horizon must be at least 1".into()));
        }
        if kind != FormulationKind::Msdhfop && horizon != 1 {
            return Err(CoreError::Argument(format!("{kind} plans a single step; horizon {horizon} given")));
        }
        let disc = match kind {
            FormulationKind::Op | FormulationKind::Fop | FormulationKind::Hfop => DiscountSpec::UNDISCOUNTED,
            FormulationKind::Dhfop => DiscountSpec {
                gamma: disc.gamma,
                tau: 1.0,
            },
            FormulationKind::Msdhfop => disc,
        };
        Ok(Self {
            kind,
            beta: if kind == FormulationKind::Op { 0.0 } else { beta },
            disc,
            horizon,
            metric,
            history_window: None,
        })
    }

    pub fn op(metric: MetricKind) -> Self {
        Self::new(FormulationKind::Op, 0.0, DiscountSpec::UNDISCOUNTED, 1, metric).unwrap()
    }

    pub fn fop(beta: f64, metric: MetricKind) -> Result<Self> {
        Self::new(FormulationKind::Fop, beta, DiscountSpec::UNDISCOUNTED, 1, metric)
    }

    pub fn hfop(beta: f64, metric: MetricKind) -> Result<Self> {
        Self::new(FormulationKind::Hfop, beta, DiscountSpec::UNDISCOUNTED, 1, metric)
    }

    pub fn dhfop(beta: f64, gamma: f64, metric: MetricKind) -> Result<Self> {
        Self::new(FormulationKind::Dhfop, beta, DiscountSpec { gamma, tau: 1.0 }, 1, metric)
    }

    pub fn msdhfop(beta: f64, gamma: f64, tau: f64, horizon: usize, metric: MetricKind) -> Result<Self> {
        Self::new(FormulationKind::Msdhfop, beta, DiscountSpec { gamma, tau }, horizon, metric)
    }

    pub fn with_window(mut self, window: Option<usize>) -> Self {
        self.history_window = window;
        self
    }

    fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    /// The history actually scored: empty for OP/FOP, windowed otherwise.
    pub fn effective_history(&self, history: &History) -> History {
        if self.kind.uses_history() {
            history.window(self.history_window)
        } else {
            History::empty()
        }
    }

    fn step_weights(&self, steps: usize) -> Vec<f64> {
        let mut w = 1.0;
        (0..steps)
            .map(|_| {
                let cur = w;
                w *= self.disc.tau;
                cur
            })
            .collect()
    }
}

/// Maps a native metric value onto the higher-is-fairer scale.
pub fn canonical_fairness(metric: MetricKind, raw: f64) -> f64 {
    match metric.orientation() {
        Orientation::HigherIsFairer => raw,
        Orientation::LowerIsFairer => -raw,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub backend: String,
    /// False when the search stopped at a node limit.
    pub proven_optimal: bool,
    pub candidates: u64,
    pub node_count: usize,
    pub lp_count: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPlan {
    pub plan: Vec<Solution>,
    pub quality_term: f64,
    pub fairness_term: f64,
    pub total: f64,
    pub per_step_utilities: Vec<UtilityVector>,
    pub diagnostics: Diagnostics,
}

/// Objective arithmetic shared by scoring and search, so both agree bit for bit.
struct Scorer {
    kind: FormulationKind,
    beta: f64,
    tau: f64,
    metric: MetricKind,
    base: Vec<f64>,
}

impl Scorer {
    fn new(spec: &FormulationSpec, history: &History, entities: usize) -> Result<Self> {
        let hist = spec.effective_history(history);
        let base = discounted_history(&hist, spec.disc.gamma).unwrap_or_else(|| vec![0.0; entities]);
        if base.len() != entities {
            return Err(CoreError::Structural(format!(
                "history has {} entities, instance has {entities}",
                base.len()
            )));
        }
        Ok(Self {
            kind: spec.kind,
            beta: spec.beta,
            tau: spec.disc.tau,
            metric: spec.metric,
            base,
        })
    }

    fn eval(&self, qualities: &[f64], utilities: &[&[f64]], scratch: &mut Vec<f64>) -> (f64, f64, f64) {
        let mut q = 0.0;
        let mut w = 1.0;
        for &qk in qualities {
            q += w * qk;
            w *= self.tau;
        }
        if self.kind == FormulationKind::Op {
            return (q, 0.0, q);
        }
        scratch.clear();
        scratch.extend_from_slice(&self.base);
        let mut w = 1.0;
        for u in utilities {
            for (a, v) in scratch.iter_mut().zip(u.iter()) {
                *a += w * v;
            }
            w *= self.tau;
        }
        let f = canonical_fairness(self.metric, self.metric.eval(scratch));
        (q, f, q + self.beta * f)
    }
}

fn check_steps(spec: &FormulationSpec, instances: &[DomainInstance]) -> Result<()> {
    if instances.len() < spec.horizon {
        return Err(CoreError::Argument(format!(
            "horizon {} needs {} step instances, {} given",
            spec.horizon,
            spec.horizon,
            instances.len()
        )));
    }
    let entities = instances[0].entities();
    if instances[..spec.horizon].iter().any(|i| i.entities() != entities) {
        return Err(CoreError::Structural("entity lists differ between steps".into()));
    }
    Ok(())
}

fn check_history(history: &History, entities: &[String]) -> Result<()> {
    match history.steps.first() {
        Some(h) if h.entities != entities => Err(CoreError::Structural(format!(
            "history entities {:?} differ from instance entities {:?}",
            h.entities, entities
        ))),
        _ => Ok(()),
    }
}

/// Scores a plan (one solution per planned step, `instances[k]` is step k).
pub fn score(spec: &FormulationSpec, history: &History, plan: &[Solution], instances: &[DomainInstance]) -> Result<ScoredPlan> {
    if plan.len() != spec.horizon {
        return Err(CoreError::Argument(format!(
            "plan has {} steps, horizon is {}",
            plan.len(),
            spec.horizon
        )));
    }
    check_steps(spec, instances)?;
    let entities = instances[0].entities();
    check_history(history, &entities)?;
    let mut qualities = Vec::with_capacity(plan.len());
    let mut utils = Vec::with_capacity(plan.len());
    for (k, (sol, inst)) in plan.iter().zip(instances).enumerate() {
        inst.check(k, sol)?;
        qualities.push(inst.quality(sol)?);
        utils.push(inst.utilities(sol)?);
    }
    let scorer = Scorer::new(spec, history, entities.len())?;
    let refs: Vec<&[f64]> = utils.iter().map(|u| u.as_slice()).collect();
    let (quality_term, fairness_term, total) = scorer.eval(&qualities, &refs, &mut Vec::new());
    let per_step_utilities = utils
        .into_iter()
        .map(|u| UtilityVector::new(entities.clone(), u))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoredPlan {
        plan: plan.to_vec(),
        quality_term,
        fairness_term,
        total,
        per_step_utilities,
        diagnostics: Diagnostics::default(),
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum SolverChoice {
    /// Enumeration for course assignment and nurse scheduling, the integer
    /// program for routing and task assignment.
    #[default]
    Auto,
    Enumeration,
    Milp {
        node_limit: Option<usize>,
    },
}

impl SolverChoice {
    fn resolve(&self, inst: &DomainInstance) -> Result<SolverChoice> {
        let ip_domain = matches!(inst, DomainInstance::Vrp(_) | DomainInstance::Tap(_));
        match self {
            SolverChoice::Auto if ip_domain => Ok(SolverChoice::Milp { node_limit: None }),
            SolverChoice::Auto => Ok(SolverChoice::Enumeration),
            SolverChoice::Milp { .. } if !ip_domain => Err(CoreError::Argument(format!(
                "the integer-program backend does not support the {} domain",
                inst.domain()
            ))),
            other => Ok(other.clone()),
        }
    }
}

fn improves(candidate: f64, best: f64) -> bool {
    candidate > best + 1e-12 * best.abs().max(1.0)
}

const MAX_PLANS: u64 = 50_000_000;

/// Finds a plan of `spec.horizon` steps maximising the objective. Among
/// ties the first plan in canonical enumeration order is kept (enumeration
/// backend).
pub fn solve(
    spec: &FormulationSpec,
    history: &History,
    instances: &[DomainInstance],
    backend: &SolverChoice,
) -> Result<ScoredPlan> {
    check_steps(spec, instances)?;
    let steps = &instances[..spec.horizon];
    let entities = steps[0].entities();
    check_history(history, &entities)?;
    let started = Instant::now();
    let backend = backend.resolve(&steps[0])?;
    let (plan, mut diagnostics) = match backend {
        SolverChoice::Milp { node_limit } => solve_milp(spec, history, steps, node_limit)?,
        _ => solve_enumeration(spec, history, steps)?,
    };
    let mut scored = score(spec, history, &plan, steps)?;
    diagnostics.wall_time_s = started.elapsed().as_secs_f64();
    scored.diagnostics = diagnostics;
    Ok(scored)
}

fn solve_enumeration(spec: &FormulationSpec, history: &History, steps: &[DomainInstance]) -> Result<(Vec<Solution>, Diagnostics)> {
    let scorer = Scorer::new(spec, history, steps[0].entities().len())?;
    let mut scratch = Vec::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut count: u64 = 0;

    if let (1, DomainInstance::Nsp(inst)) = (steps.len(), &steps[0]) {
        // Streamed: the roster space is too large to materialise comfortably.
        let mut best_sol = None;
        let mut best_total = f64::NEG_INFINITY;
        for sol in nsp_enumerate(inst) {
            count += 1;
            let q = nsp_quality(inst, &sol);
            let u = nsp_utilities(inst, &sol);
            let (_, _, total) = scorer.eval(&[q], &[&u], &mut scratch);
            if best_sol.is_none() || improves(total, best_total) {
                best_total = total;
                best_sol = Some(sol);
            }
        }
        let sol = best_sol.ok_or_else(|| CoreError::Infeasible("no feasible roster".into()))?;
        return Ok((vec![Solution::Nsp(sol)], enum_diag(count)));
    }

    if let (1, DomainInstance::Vrp(inst)) = (steps.len(), &steps[0]) {
        let fairness = match (spec.kind, spec.metric) {
            (FormulationKind::Op, _) => Some(RouteFairness::None),
            (_, MetricKind::MaxMinGap) => Some(RouteFairness::Gap),
            (_, MetricKind::MinimaxCost) => Some(RouteFairness::Minimax),
            _ => None,
        };
        if let Some(fairness) = fairness {
            let (sol, stats) = vrp_partition_search(inst, spec.beta, fairness, &scorer.base)?;
            let diag = Diagnostics {
                backend: "enumeration".into(),
                proven_optimal: true,
                candidates: stats.nodes,
                node_count: stats.sweeps as usize,
                ..Diagnostics::default()
            };
            return Ok((vec![Solution::Vrp(sol)], diag));
        }
    }

    if let (1, DomainInstance::Tap(inst)) = (steps.len(), &steps[0]) {
        let metric = match (spec.kind, spec.metric) {
            (FormulationKind::Op, _) => Some(None),
            (_, m @ (MetricKind::MinimaxCost | MetricKind::MaxMinGap)) => Some(Some(m)),
            _ => None,
        };
        if let Some(metric) = metric {
            let mut best: Option<(f64, TapSolution)> = None;
            for sol in tap_threshold_candidates(inst, metric, &scorer.base)? {
                count += 1;
                let u = tap_utilities(inst, &sol);
                let q = -u.iter().sum::<f64>();
                let (_, _, total) = scorer.eval(&[q], &[&u], &mut scratch);
                if best.as_ref().is_none_or(|(b, _)| improves(total, *b)) {
                    best = Some((total, sol));
                }
            }
            let (_, sol) = best.ok_or_else(|| CoreError::Infeasible("no feasible assignment".into()))?;
            return Ok((vec![Solution::Tap(sol)], enum_diag(count)));
        }
    }

    // Per-step candidates with their quality and utilities precomputed.
    let mut lists: Vec<Vec<(Solution, f64, Vec<f64>)>> = Vec::new();
    for (k, inst) in steps.iter().enumerate() {
        let cands = inst.candidates()?;
        if cands.is_empty() {
            return Err(CoreError::Infeasible(format!("step {k} has no feasible solution")));
        }
        let scored = cands
            .into_iter()
            .map(|s| {
                let q = inst.quality(&s)?;
                let u = inst.utilities(&s)?;
                Ok((s, q, u))
            })
            .collect::<Result<Vec<_>>>()?;
        lists.push(scored);
    }
    let plans = lists
        .iter()
        .try_fold(1u64, |acc, l| acc.checked_mul(l.len() as u64))
        .filter(|&p| p <= MAX_PLANS)
        .ok_or_else(|| CoreError::Argument(format!("more than {MAX_PLANS} plans to enumerate")))?;

    let h = lists.len();
    let mut idx = vec![0usize; h];
    let mut qualities = vec![0.0; h];
    for _ in 0..plans {
        count += 1;
        let utils: Vec<&[f64]> = idx.iter().zip(&lists).map(|(&i, l)| l[i].2.as_slice()).collect();
        for k in 0..h {
            qualities[k] = lists[k][idx[k]].1;
        }
        let (_, _, total) = scorer.eval(&qualities, &utils, &mut scratch);
        if best.as_ref().is_none_or(|(b, _)| improves(total, *b)) {
            best = Some((total, idx.clone()));
        }
        // Odometer with the last step varying fastest.
        for k in (0..h).rev() {
            idx[k] += 1;
            if idx[k] < lists[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    let (_, idx) = best.expect("at least one plan");
    let plan = idx.iter().zip(&lists).map(|(&i, l)| l[i].0.clone()).collect();
    Ok((plan, enum_diag(count)))
}

fn enum_diag(count: u64) -> Diagnostics {
    Diagnostics {
        backend: "enumeration".into(),
        proven_optimal: true,
        candidates: count,
        ..Diagnostics::default()
    }
}

/// Objective of the routing/assignment programs for this spec and history.
pub fn ip_objective(spec: &FormulationSpec, history: &History, entities: usize) -> Result<IpObjective> {
    let weights = spec.step_weights(spec.horizon);
    if spec.kind == FormulationKind::Op {
        let mut o = IpObjective::quality_only();
        o.step_weights = weights;
        return Ok(o);
    }
    let hist = spec.effective_history(history);
    let offsets = discounted_history(&hist, spec.disc.gamma).unwrap_or_else(|| vec![0.0; entities]);
    Ok(IpObjective::with_fairness(spec.beta, weights, spec.metric, offsets))
}

fn solve_milp(
    spec: &FormulationSpec,
    history: &History,
    steps: &[DomainInstance],
    node_limit: Option<usize>,
) -> Result<(Vec<Solution>, Diagnostics)> {
    let entities = steps[0].entities().len();
    let obj = ip_objective(spec, history, entities)?;
    let options = BnbOptions {
        node_limit,
        ..BnbOptions::default()
    };
    let (result, plan): (_, Box<dyn Fn(&[f64]) -> Result<Vec<Solution>>>) = match &steps[0] {
        DomainInstance::Vrp(_) => {
            let insts = steps
                .iter()
                .map(|s| match s {
                    DomainInstance::Vrp(i) => Ok(i.clone()),
                    _ => Err(CoreError::Argument("mixed domains in one plan".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            let ip = vrp_build_ip(&insts, &obj)?;
            let mut sep = ip.separator();
            let options = BnbOptions {
                separate_fractional: true,
                ..options
            };
            let r = branch_and_bound_with(&ip.model, Some(&mut sep), &options)?;
            (
                r,
                Box::new(move |x: &[f64]| Ok(ip.decode(x)?.into_iter().map(Solution::Vrp).collect())),
            )
        }
        DomainInstance::Tap(_) => {
            let insts = steps
                .iter()
                .map(|s| match s {
                    DomainInstance::Tap(i) => Ok(i.clone()),
                    _ => Err(CoreError::Argument("mixed domains in one plan".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            let ip = tap_build_ip(&insts, &obj)?;
            let start = tap_heuristic(&insts, &obj)?;
            let options = BnbOptions {
                incumbent: Some(ip.encode(&insts, &obj, &start)),
                ..options
            };
            let r = branch_and_bound_with(&ip.model, None, &options)?;
            (
                r,
                Box::new(move |x: &[f64]| Ok(ip.decode(x)?.into_iter().map(Solution::Tap).collect())),
            )
        }
        other => {
            return Err(CoreError::Argument(format!(
                "the integer-program backend does not support the {} domain",
                other.domain()
            )))
        }
    };
    let proven_optimal = match result.status {
        SolveStatus::Optimal => true,
        SolveStatus::NodeLimit if result.has_solution() => false,
        SolveStatus::NodeLimit => {
            return Err(CoreError::Infeasible("node limit reached before any feasible plan was found".into()))
        }
        SolveStatus::Infeasible => return Err(CoreError::Infeasible("integer program has no feasible solution".into())),
        SolveStatus::Unbounded => {
            return Err(CoreError::Solver(tempfair_milp::MilpError::Numerical(
                "integer program reported unbounded".into(),
            )))
        }
    };
    let sols = plan(&result.assignment)?;
    Ok((
        sols,
        Diagnostics {
            backend: "milp".into(),
            proven_optimal,
            candidates: 0,
            node_count: result.node_count,
            lp_count: result.lp_count,
            wall_time_s: 0.0,
        },
    ))
}

/// Solves the instances one step at a time, committing each step's (first)
/// planned solution to the history before moving on. MSDHFOP plans over the
/// remaining steps, up to its horizon.
pub fn rolling_run(
    spec: &FormulationSpec,
    initial_history: &History,
    instances: &[DomainInstance],
    backend: &SolverChoice,
) -> Result<Vec<ScoredPlan>> {
    let mut history = initial_history.clone();
    let mut out = Vec::with_capacity(instances.len());
    for k in 0..instances.len() {
        let h = spec.horizon.min(instances.len() - k);
        let step_spec = spec.with_horizon(h);
        let scored = solve(&step_spec, &history, &instances[k..k + h], backend)?;
        history.push(scored.per_step_utilities[0].clone())?;
        out.push(scored);
    }
    Ok(out)
}
