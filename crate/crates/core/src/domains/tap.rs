//! Task assignment: a perfect matching of agents to tasks.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use tempfair_milp::{Cmp, LinExpr, LinearModel, MilpError, ObjSense, VarId};

use super::text::{fmt_real, Lines};
use super::IpObjective;
use crate::error::{CoreError, Result};
use crate::fairness::MetricKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapInstance {
    pub agents: Vec<String>,
    pub tasks: Vec<String>,
    /// `cost[a][t]`.
    pub cost: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapSolution {
    pub task_of_agent: Vec<usize>,
}

impl TapInstance {
    pub fn new(agents: Vec<String>, tasks: Vec<String>, cost: Vec<Vec<f64>>) -> Result<Self> {
        let inst = Self { agents, tasks, cost };
        inst.validate()?;
        Ok(inst)
    }

    /// Agents `a1..an`, tasks `t1..tn`.
    pub fn from_costs(cost: Vec<Vec<f64>>) -> Result<Self> {
        let n = cost.len();
        Self::new(
            crate::fairness::entity_names("a", n),
            crate::fairness::entity_names("t", n),
            cost,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.agents.len();
        if n == 0 {
            return Err(CoreError::Argument("at least one agent required".into()));
        }
        if self.tasks.len() != n {
            return Err(CoreError::Argument(format!(
                "{n} agents but {} tasks; the assignment must be square",
                self.tasks.len()
            )));
        }
        if self.cost.len() != n || self.cost.iter().any(|r| r.len() != n) {
            return Err(CoreError::Structural("cost matrix must be agents x tasks".into()));
        }
        if self.cost.iter().flatten().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(CoreError::Argument("costs must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.agents.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("tap v1\n");
        let _ = writeln!(s, "agents {}", self.agents.join(" "));
        let _ = writeln!(s, "tasks {}", self.tasks.join(" "));
        for row in &self.cost {
            let vals: Vec<String> = row.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(s, "cost {}", vals.join(" "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_header("tap v1")?;
        let agents: Vec<String> = lines.keyed("agents")?.1.iter().map(|s| s.to_string()).collect();
        let tasks: Vec<String> = lines.keyed("tasks")?.1.iter().map(|s| s.to_string()).collect();
        let mut cost = Vec::new();
        while let Some((ln, f)) = lines.next_keyed("cost")? {
            if f.len() != tasks.len() {
                return Err(CoreError::Parse {
                    line: ln,
                    msg: format!("expected {} costs", tasks.len()),
                });
            }
            cost.push((0..f.len()).map(|i| Lines::real_at(ln, &f, i)).collect::<Result<Vec<_>>>()?);
        }
        lines.expect_end()?;
        Self::new(agents, tasks, cost)
    }
}

pub fn tap_check(instance: &TapInstance, step: usize, sol: &TapSolution) -> Result<()> {
    let n = instance.size();
    let violation = |constraint: String| Err(CoreError::ConstraintViolation { step, constraint });
    if sol.task_of_agent.len() != n {
        return violation("one task per agent".into());
    }
    let mut used = vec![false; n];
    for (a, &t) in sol.task_of_agent.iter().enumerate() {
        if t >= n {
            return violation(format!("agent {} gets unknown task {t}", instance.agents[a]));
        }
        if used[t] {
            return violation(format!("task {} assigned twice", instance.tasks[t]));
        }
        used[t] = true;
    }
    Ok(())
}

/// Cost incurred by each agent.
pub fn tap_utilities(instance: &TapInstance, sol: &TapSolution) -> Vec<f64> {
    sol.task_of_agent
        .iter()
        .enumerate()
        .map(|(a, &t)| instance.cost[a][t])
        .collect()
}

/// All permutations in lexicographic order of `task_of_agent`. Small inputs only.
pub fn tap_enumerate(instance: &TapInstance) -> Result<Vec<TapSolution>> {
    let n = instance.size();
    if n > 9 {
        return Err(CoreError::Argument(format!("assignment enumeration limited to 9 agents, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![TapSolution {
        task_of_agent: perm.clone(),
    }];
    // Standard next-permutation walk.
    loop {
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            return Ok(out);
        };
        let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).unwrap();
        perm.swap(i, j);
        perm[i + 1..].reverse();
        out.push(TapSolution {
            task_of_agent: perm.clone(),
        });
    }
}

/// Minimum-cost perfect assignment by the O(n^3) shortest augmenting path
/// method with potentials.
pub fn tap_hungarian(instance: &TapInstance) -> (TapSolution, f64) {
    let sol = TapSolution {
        task_of_agent: hungarian(&instance.cost),
    };
    let total = tap_utilities(instance, &sol).iter().sum();
    (sol, total)
}

/// Candidate assignments containing an optimum of `quality + beta * F` for a
/// single step, where `F` is the minimax or max-min gap of `offsets + cost`
/// (`None` for quality only). Each candidate is a min-sum assignment
/// restricted to loads inside one window `[lo, hi]` drawn from the distinct
/// load values; the optimum's own window yields a candidate at least as good.
pub fn tap_threshold_candidates(instance: &TapInstance, metric: Option<MetricKind>, offsets: &[f64]) -> Result<Vec<TapSolution>> {
    let n = instance.size();
    if offsets.len() != n {
        return Err(CoreError::Structural(format!("{} offsets for {n} agents", offsets.len())));
    }
    let load = |a: usize, t: usize| offsets[a] + instance.cost[a][t];
    let mut values: Vec<f64> = (0..n).flat_map(|a| (0..n).map(move |t| (a, t))).map(|(a, t)| load(a, t)).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let windows: Vec<(f64, f64)> = match metric {
        None => return Ok(vec![tap_hungarian(instance).0]),
        Some(MetricKind::MinimaxCost) => values.iter().map(|&hi| (f64::NEG_INFINITY, hi)).collect(),
        Some(MetricKind::MaxMinGap) => {
            if values.len() > MAX_GAP_VALUES {
                return Err(CoreError::Argument(format!(
                    "{} distinct loads exceed the window search limit of {MAX_GAP_VALUES}",
                    values.len()
                )));
            }
            let mut w = Vec::new();
            for (i, &lo) in values.iter().enumerate() {
                w.extend(values[i..].iter().map(|&hi| (lo, hi)));
            }
            w
        }
        Some(m) => {
            return Err(CoreError::Argument(format!(
                "window search supports the minimax and gap metrics, not '{m}'"
            )))
        }
    };
    let span = instance.cost.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    let forbidden = (span + 1.0) * (n as f64 + 1.0);
    let mut out: Vec<TapSolution> = Vec::new();
    for (lo, hi) in windows {
        let allowed = |a: usize, t: usize| (lo..=hi).contains(&load(a, t));
        let c: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..n).map(|t| if allowed(a, t) { instance.cost[a][t] } else { forbidden }).collect())
            .collect();
        let task_of_agent = hungarian(&c);
        if task_of_agent.iter().enumerate().all(|(a, &t)| allowed(a, t)) {
            let sol = TapSolution { task_of_agent };
            if !out.contains(&sol) {
                out.push(sol);
            }
        }
    }
    Ok(out)
}

const MAX_GAP_VALUES: usize = 64;

/// Task of each row for a square matrix `c[row][col]` (any real entries).
fn hungarian(c: &[Vec<f64>]) -> Vec<usize> {
    let n = c.len();
    let inf = f64::INFINITY;
    // 1-based arrays; p[j] is the row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut task_of_agent = vec![0; n];
    for j in 1..=n {
        task_of_agent[p[j] - 1] = j - 1;
    }
    task_of_agent
}

/// Value of a multi-step plan under the assignment program's objective.
pub fn tap_plan_objective(instances: &[TapInstance], obj: &IpObjective, plan: &[TapSolution]) -> f64 {
    PlanEval::new(instances, obj).total(plan)
}

struct PlanEval<'a> {
    insts: &'a [TapInstance],
    obj: &'a IpObjective,
    offsets: Vec<f64>,
}

impl<'a> PlanEval<'a> {
    fn new(insts: &'a [TapInstance], obj: &'a IpObjective) -> Self {
        let n = insts[0].size();
        let offsets = obj.fairness.as_ref().map_or(vec![0.0; n], |f| f.offsets.clone());
        Self { insts, obj, offsets }
    }

    /// Offset plus weighted cost of each agent.
    fn loads(&self, plan: &[TapSolution]) -> Vec<f64> {
        let mut u = self.offsets.clone();
        for ((inst, sol), w) in self.insts.iter().zip(plan).zip(&self.obj.step_weights) {
            for (a, &t) in sol.task_of_agent.iter().enumerate() {
                u[a] += w * inst.cost[a][t];
            }
        }
        u
    }

    fn fairness(&self, loads: &[f64]) -> f64 {
        if !self.obj.fairness_active() {
            return 0.0;
        }
        let max = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match self.obj.fairness.as_ref().map(|f| f.metric) {
            Some(MetricKind::MaxMinGap) => max - loads.iter().copied().fold(f64::INFINITY, f64::min).max(0.0),
            _ => max,
        }
    }

    fn total(&self, plan: &[TapSolution]) -> f64 {
        let loads = self.loads(plan);
        let quality: f64 = loads.iter().zip(&self.offsets).map(|(u, o)| u - o).sum();
        quality + self.obj.beta * self.fairness(&loads)
    }
}

/// A good feasible plan for the assignment program: Hungarian passes on
/// costs reweighted by subgradient multipliers of the minimax rows, each
/// polished by pairwise task swaps. Not guaranteed optimal.
pub fn tap_heuristic(instances: &[TapInstance], obj: &IpObjective) -> Result<Vec<TapSolution>> {
    let first = instances
        .first()
        .ok_or_else(|| CoreError::Argument("no assignment instance given".into()))?;
    let n = first.size();
    obj.validate(instances.len(), n)?;
    let eval = PlanEval::new(instances, obj);
    let solve_weighted = |lambda: &[f64]| -> Vec<TapSolution> {
        instances
            .iter()
            .zip(&obj.step_weights)
            .map(|(inst, w)| {
                let c: Vec<Vec<f64>> = (0..n)
                    .map(|a| inst.cost[a].iter().map(|c| w * c * (1.0 + lambda[a])).collect())
                    .collect();
                TapSolution {
                    task_of_agent: hungarian(&c),
                }
            })
            .collect()
    };
    let mut lambda = vec![0.0; n];
    let mut best = swap_descent(&eval, solve_weighted(&lambda));
    let mut best_val = eval.total(&best);
    let minimax = obj.fairness_active() && obj.fairness.as_ref().is_some_and(|f| f.metric == MetricKind::MinimaxCost);
    if !minimax {
        return Ok(best);
    }
    // Lagrangian of the rows M >= offset_a + U_a: multipliers on the simplex
    // scaled to beta, dual value sum_k w_k sum_a (1 + l_a) c + sum_a l_a offset_a.
    let beta = obj.beta;
    lambda = vec![beta / n as f64; n];
    let mut theta = 1.0;
    let mut best_dual = f64::NEG_INFINITY;
    let mut stale = 0;
    for _ in 0..HEURISTIC_ROUNDS {
        let plan = solve_weighted(&lambda);
        let loads = eval.loads(&plan);
        let dual: f64 = loads
            .iter()
            .zip(&eval.offsets)
            .zip(&lambda)
            .map(|((u, o), l)| (u - o) * (1.0 + l) + l * o)
            .sum();
        if dual > best_dual + 1e-9 {
            best_dual = dual;
            stale = 0;
        } else {
            stale += 1;
            if stale >= 10 {
                theta /= 2.0;
                stale = 0;
            }
        }
        let polished = swap_descent(&eval, plan);
        let val = eval.total(&polished);
        if val < best_val - 1e-9 {
            best_val = val;
            best = polished;
        }
        let mean = loads.iter().sum::<f64>() / n as f64;
        let g: Vec<f64> = loads.iter().map(|u| u - mean).collect();
        let norm: f64 = g.iter().map(|x| x * x).sum();
        if norm < 1e-12 || best_val - dual < 1e-9 || theta < 1e-4 {
            break;
        }
        let step = theta * (best_val - dual) / norm;
        let moved: Vec<f64> = lambda.iter().zip(&g).map(|(l, gi)| l + step * gi).collect();
        lambda = project_simplex(&moved, beta);
    }
    Ok(best)
}

const HEURISTIC_ROUNDS: usize = 150;

/// Euclidean projection onto `{x >= 0, sum x = radius}`.
fn project_simplex(v: &[f64], radius: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - radius) / (i + 1) as f64;
        if s - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Swaps the tasks of two agents within one step while that lowers the
/// objective.
fn swap_descent(eval: &PlanEval, mut plan: Vec<TapSolution>) -> Vec<TapSolution> {
    let n = plan[0].task_of_agent.len();
    let mut loads = eval.loads(&plan);
    let mut fair = eval.fairness(&loads);
    let beta = eval.obj.beta;
    let mut improved = true;
    while improved {
        improved = false;
        for k in 0..plan.len() {
            let (inst, w) = (&eval.insts[k], eval.obj.step_weights[k]);
            for a in 0..n {
                for b in a + 1..n {
                    let (ta, tb) = (plan[k].task_of_agent[a], plan[k].task_of_agent[b]);
                    let da = w * (inst.cost[a][tb] - inst.cost[a][ta]);
                    let db = w * (inst.cost[b][ta] - inst.cost[b][tb]);
                    if da == 0.0 && db == 0.0 {
                        continue;
                    }
                    loads[a] += da;
                    loads[b] += db;
                    let f = eval.fairness(&loads);
                    if da + db + beta * (f - fair) < -1e-9 {
                        plan[k].task_of_agent.swap(a, b);
                        fair = f;
                        improved = true;
                    } else {
                        loads[a] -= da;
                        loads[b] -= db;
                    }
                }
            }
        }
    }
    plan
}

/// Assignment program over one or more steps.
pub struct TapIp {
    pub model: LinearModel,
    /// `x[k][a][t]`.
    pub x: Vec<Vec<Vec<VarId>>>,
    pub fairness_vars: Vec<VarId>,
}

impl TapIp {
    /// Variable values of `plan`, with the fairness variables at their
    /// tightest feasible values.
    pub fn encode(&self, instances: &[TapInstance], obj: &IpObjective, plan: &[TapSolution]) -> Vec<f64> {
        let mut x = vec![0.0; self.model.num_vars()];
        for (xs, sol) in self.x.iter().zip(plan) {
            for (a, &t) in sol.task_of_agent.iter().enumerate() {
                x[xs[a][t].0] = 1.0;
            }
        }
        if !self.fairness_vars.is_empty() {
            let loads = PlanEval::new(instances, obj).loads(plan);
            x[self.fairness_vars[0].0] = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if let Some(min) = self.fairness_vars.get(1) {
                x[min.0] = loads.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
            }
        }
        x
    }

    pub fn decode(&self, values: &[f64]) -> Result<Vec<TapSolution>> {
        self.x
            .iter()
            .map(|xs| {
                let task_of_agent = xs
                    .iter()
                    .enumerate()
                    .map(|(a, row)| {
                        row.iter()
                            .position(|v| values[v.0] > 0.5)
                            .ok_or_else(|| CoreError::Solver(MilpError::Numerical(format!("agent {a} has no task"))))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TapSolution { task_of_agent })
            })
            .collect()
    }
}

/// Builds the assignment program. Step `k` costs enter with weight
/// `obj.step_weights[k]`, both in the quality and in each agent's utility.
pub fn tap_build_ip(instances: &[TapInstance], obj: &IpObjective) -> Result<TapIp> {
    let first = instances
        .first()
        .ok_or_else(|| CoreError::Argument("no assignment instance given".into()))?;
    let n = first.size();
    for inst in instances {
        inst.validate()?;
        if inst.size() != n {
            return Err(CoreError::Structural("assignment size differs between steps".into()));
        }
    }
    obj.validate(instances.len(), n)?;
    let mut m = LinearModel::new(ObjSense::Minimize);
    let mut utility = vec![LinExpr::new(); n];
    let mut x = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        let w = obj.step_weights[k];
        let xs: Vec<Vec<VarId>> = (0..n)
            .map(|a| (0..n).map(|t| m.add_binary(format!("x_{k}_{a}_{t}"))).collect())
            .collect();
        for a in 0..n {
            for t in 0..n {
                let c = inst.cost[a][t];
                if c != 0.0 {
                    m.add_objective_term(xs[a][t], w * c);
                    utility[a].add_term(xs[a][t], w * c);
                }
            }
        }
        for t in 0..n {
            m.add_constraint(format!("task_{k}_{t}"), (0..n).map(|a| (xs[a][t], 1.0)).collect(), Cmp::Eq, 1.0);
        }
        for a in 0..n {
            m.add_constraint(format!("agent_{k}_{a}"), (0..n).map(|t| (xs[a][t], 1.0)).collect(), Cmp::Eq, 1.0);
        }
        x.push(xs);
    }
    let fairness_vars = obj.add_fairness(&mut m, &utility)?;
    if obj.task_bounds && obj.fairness_active() {
        // Whoever performs task t at step k incurs at least its offset, this
        // cost, and the cheapest cost at every other step; the maximum is at
        // least that.
        let offsets = &obj.fairness.as_ref().unwrap().offsets;
        let big = fairness_vars[0];
        let cheapest: Vec<Vec<f64>> = instances
            .iter()
            .zip(&obj.step_weights)
            .map(|(inst, w)| inst.cost.iter().map(|r| w * r.iter().copied().fold(f64::INFINITY, f64::min)).collect())
            .collect();
        for (k, inst) in instances.iter().enumerate() {
            let w = obj.step_weights[k];
            for t in 0..n {
                let mut coeffs = vec![(big, 1.0)];
                for a in 0..n {
                    let others: f64 = (0..instances.len()).filter(|&j| j != k).map(|j| cheapest[j][a]).sum();
                    let lb = offsets[a] + w * inst.cost[a][t] + others;
                    if lb != 0.0 {
                        coeffs.push((x[k][a][t], -lb));
                    }
                }
                m.add_constraint(format!("task_bound_{k}_{t}"), coeffs, Cmp::Ge, 0.0);
            }
        }
    }
    Ok(TapIp {
        model: m,
        x,
        fairness_vars,
    })
}
