//! Seeded generators for routing, task assignment and nurse scheduling
//! instances and their synthetic histories.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, which is
//! portable across platforms, so a seed always reproduces the same output.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domains::{tap_hungarian, tap_utilities, DomainInstance, NspInstance, TapInstance, VrpInstance};
use crate::error::{CoreError, Result};
use crate::fairness::{entity_names, History, MetricKind, UtilityVector};
use crate::objective::{solve, FormulationSpec, SolverChoice};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n_points` distinct non-depot cells of a `grid_size` x `grid_size` grid,
/// with the depot (index 0) at the centre cell.
pub fn gen_vrp(grid_size: usize, n_points: usize, n_vehicles: usize, seed: u64) -> Result<VrpInstance> {
    gen_vrp_with(grid_size, n_points, n_vehicles, &mut rng(seed))
}

fn gen_vrp_with(grid_size: usize, n_points: usize, n_vehicles: usize, rng: &mut ChaCha8Rng) -> Result<VrpInstance> {
    let g = grid_size;
    if g == 0 || n_points + 1 > g * g {
        return Err(CoreError::Argument(format!(
            "{n_points} points do not fit on a {g}x{g} grid next to the depot"
        )));
    }
    let centre = (g / 2) as i64;
    let cells: Vec<(i64, i64)> = (0..g as i64)
        .flat_map(|x| (0..g as i64).map(move |y| (x, y)))
        .filter(|&c| c != (centre, centre))
        .collect();
    let mut points = vec![(centre, centre)];
    points.extend(sample(rng, cells.len(), n_points).into_iter().map(|i| cells[i]));
    VrpInstance::new(points, 0, entity_names("v", n_vehicles))
}

/// Solves OP on `k_steps` random instances and hands the sorted optimal
/// route lengths to the vehicles, so `v1` always drove least and the last
/// vehicle most.
pub fn gen_vrp_history(
    k_steps: usize,
    grid_size: usize,
    n_points: usize,
    n_vehicles: usize,
    seed: u64,
) -> Result<History> {
    if k_steps == 0 {
        return Err(CoreError::Argument("history needs at least one step".into()));
    }
    let mut r = rng(seed);
    let spec = FormulationSpec::op(MetricKind::MaxMinGap);
    let mut series = Vec::with_capacity(k_steps);
    for _ in 0..k_steps {
        let inst = gen_vrp_with(grid_size, n_points, n_vehicles, &mut r)?;
        let plan = solve(&spec, &History::empty(), &[DomainInstance::Vrp(inst)], &SolverChoice::Enumeration)?;
        let mut lengths = plan.per_step_utilities[0].values.clone();
        lengths.sort_by(f64::total_cmp);
        series.push(lengths);
    }
    History::from_steps(entity_names("v", n_vehicles), &series)
}

/// One cost-5 task, three cost-20 tasks and cost 30 elsewhere for every
/// agent; constrained agents lose their cost-5 task (it becomes 30).
pub fn gen_tap(n: usize, constrained: &[usize], seed: u64) -> Result<TapInstance> {
    gen_tap_with(n, constrained, &mut rng(seed))
}

fn gen_tap_with(n: usize, constrained: &[usize], rng: &mut ChaCha8Rng) -> Result<TapInstance> {
    if n < 4 {
        return Err(CoreError::Argument(format!("cost recipe needs at least 4 tasks, got {n}")));
    }
    if constrained.iter().any(|&a| a >= n) {
        return Err(CoreError::Argument("constrained agent index out of range".into()));
    }
    let cost = (0..n)
        .map(|a| {
            let mut row = vec![30.0; n];
            let picks = sample(rng, n, 4).into_vec();
            if !constrained.contains(&a) {
                row[picks[0]] = 5.0;
            }
            for &t in &picks[1..] {
                row[t] = 20.0;
            }
            row
        })
        .collect();
    TapInstance::from_costs(cost)
}

/// A complete task-assignment run: six future instances (the last three with
/// the agents in `c` constrained) and a synthetic history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapRun {
    pub instances: Vec<TapInstance>,
    /// One step holding each agent's historical cost.
    pub history: History,
    /// Constrained agents, ascending.
    pub c: Vec<usize>,
    /// The four agents with the largest historical cost, ascending.
    pub w: Vec<usize>,
}

pub const TAP_AGENTS: usize = 40;
pub const TAP_CONSTRAINED: usize = 8;
pub const TAP_INSTANCES: usize = 6;

pub fn gen_tap_run(seed: u64) -> Result<TapRun> {
    let n = TAP_AGENTS;
    let mut r = rng(seed);
    let mut c = sample(&mut r, n, TAP_CONSTRAINED).into_vec();
    c.sort_unstable();
    let mut instances = Vec::with_capacity(TAP_INSTANCES);
    for k in 0..TAP_INSTANCES {
        let constrained: &[usize] = if k < TAP_INSTANCES / 2 { &[] } else { &c };
        instances.push(gen_tap_with(n, constrained, &mut r)?);
    }
    // Total cost of each agent when OP (min-sum) is solved on every instance.
    let mut total = vec![0.0; n];
    for inst in &instances {
        let (sol, _) = tap_hungarian(inst);
        for (t, u) in total.iter_mut().zip(tap_utilities(inst, &sol)) {
            *t += u;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| total[a].total_cmp(&total[b]).then(a.cmp(&b)));
    let mut w: Vec<usize> = order.iter().rev().filter(|a| !c.contains(a)).take(4).copied().collect();
    w.sort_unstable();
    let mut hist = vec![0.0; n];
    let rest: Vec<usize> = order.into_iter().filter(|a| !w.contains(a)).collect();
    for &a in &w {
        hist[a] = 180.0;
    }
    for (i, &a) in rest.iter().enumerate() {
        hist[a] = if i < 24 { 30.0 } else { 120.0 };
    }
    let history = History::new(vec![UtilityVector::new(instances[0].agents.clone(), hist)?])?;
    Ok(TapRun {
        instances,
        history,
        c,
        w,
    })
}

/// Per-step maximin fairness of the first history (the second is its reverse).
pub const NSP_STEP_FAIRNESS: [f64; 15] = [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0];

/// Two 15-week nurse histories with opposite fairness trends. Week `k` of
/// the first gives nurses `(lo, mid, mid, mid, 15)` with `lo = f_k * 15`
/// and `mid` halfway, so its maximin ratio is exactly `f_k`. The second is
/// the first reversed. The construction is deterministic; `seed` is accepted
/// for interface uniformity.
pub fn gen_nsp_histories(seed: u64) -> Result<(History, History)> {
    let _ = seed;
    let inst = NspInstance::weekly_reference();
    let u_max = 15.0;
    let series: Vec<Vec<f64>> = NSP_STEP_FAIRNESS
        .iter()
        .map(|f| {
            let lo = f * u_max;
            let mid = (lo + u_max) / 2.0;
            vec![lo, mid, mid, mid, u_max]
        })
        .collect();
    let h1 = History::from_steps(inst.nurses.clone(), &series)?;
    let h2 = h1.reversed();
    Ok((h1, h2))
}

/// Random preference table for `n` nurses; used by tests and `gen nsp`.
pub fn gen_nsp(n: usize, seed: u64) -> Result<NspInstance> {
    let mut r = rng(seed);
    let mut preference = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = [0u8; crate::domains::nsp::SHIFTS];
        for p in row.iter_mut() {
            *p = r.gen_range(0..=3);
        }
        preference.push(row);
    }
    let seniority = (0..n).map(|_| r.gen_range(0..=3) as f64).collect();
    NspInstance::new(entity_names("n", n), seniority, preference, 15.0)
}
