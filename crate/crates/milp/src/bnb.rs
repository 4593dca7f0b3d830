use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::rc::Rc;

use crate::error::MilpError;
use crate::model::{Constraint, LinearModel, ObjSense};
use crate::simplex::{BasisSnapshot, LpStatus, RowData, Simplex};

/// Feasibility and integrality tolerance of reported solutions.
pub const FEAS_TOL: f64 = 1e-6;
const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node budget exhausted; `assignment` holds the incumbent if one was found.
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Per-variable values (empty when no feasible point is known).
    pub assignment: Vec<f64>,
    /// Objective in the model's own sense (NaN when no feasible point is known).
    pub objective_value: f64,
    pub node_count: usize,
    pub lp_count: usize,
    /// Lazy rows accepted from the separator.
    pub cuts_added: usize,
}

impl SolveResult {
    pub fn has_solution(&self) -> bool {
        !self.assignment.is_empty()
    }

    pub fn value(&self, var: crate::VarId) -> f64 {
        self.assignment[var.0]
    }
}

/// Lazy constraint generator.
pub trait Separator {
    /// Returns rows violated by `point`, or nothing when the point is
    /// acceptable. `integral` is true when every integer variable is integral.
    fn separate(&mut self, point: &[f64], integral: bool) -> Vec<Constraint>;
}

#[derive(Debug, Clone)]
pub struct BnbOptions {
    pub node_limit: Option<usize>,
    /// Also call the separator at fractional LP points.
    pub separate_fractional: bool,
    /// Dive depth-first until the first incumbent, then switch to best-bound.
    pub dive_until_incumbent: bool,
    /// Known feasible point to start from. It must satisfy every row the
    /// separator could add, not just the model's own rows.
    pub incumbent: Option<Vec<f64>>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            node_limit: None,
            separate_fractional: false,
            dive_until_incumbent: true,
            incumbent: None,
        }
    }
}

struct Node {
    changes: Vec<(usize, f64, f64)>,
    basis: Rc<BasisSnapshot>,
    bound: f64,
    depth: usize,
}

#[derive(PartialEq)]
struct Key {
    bound: f64,
    depth: usize,
    id: usize,
    dive: bool,
}

impl Eq for Key {}

impl Ord for Key {
    // BinaryHeap pops the greatest key, so "greater" means "explore first".
    fn cmp(&self, other: &Self) -> Ordering {
        if self.dive {
            return self
                .depth
                .cmp(&other.depth)
                .then_with(|| other.bound.total_cmp(&self.bound))
                .then_with(|| other.id.cmp(&self.id));
        }
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| self.depth.cmp(&other.depth))
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn to_row(c: &Constraint) -> RowData {
    let mut coeffs: Vec<(usize, f64)> = c.coeffs.iter().map(|&(v, a)| (v.0, a)).collect();
    coeffs.sort_by_key(|t| t.0);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for (j, a) in coeffs {
        match merged.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => merged.push((j, a)),
        }
    }
    merged.retain(|t| t.1 != 0.0);
    RowData {
        coeffs: merged,
        cmp: c.cmp,
        rhs: c.rhs,
    }
}

fn signature(row: &RowData) -> String {
    let mut s = format!("{:?}|{:e}", row.cmp, row.rhs);
    for (j, a) in &row.coeffs {
        s.push_str(&format!("|{j}:{a:e}"));
    }
    s
}

fn finish(model: &LinearModel, x: Vec<f64>) -> Result<(Vec<f64>, f64), MilpError> {
    let mut x = x;
    for (v, xi) in model.vars.iter().zip(x.iter_mut()) {
        if v.integer {
            *xi = xi.round();
        }
        *xi = xi.clamp(v.lower, v.upper);
    }
    let viol = model.max_violation(&x);
    if viol > 10.0 * FEAS_TOL {
        return Err(MilpError::Numerical(format!(
            "solution violates the model by {viol:.3e} after rounding"
        )));
    }
    let obj = model.objective_value(&x);
    Ok((x, obj))
}

fn check_start(model: &LinearModel, x: &[f64]) -> Result<(), MilpError> {
    if x.len() != model.num_vars() {
        return Err(MilpError::InvalidModel(format!(
            "starting point has {} values for {} variables",
            x.len(),
            model.num_vars()
        )));
    }
    for (v, &xi) in model.vars.iter().zip(x) {
        let off_bounds = xi < v.lower - FEAS_TOL || xi > v.upper + FEAS_TOL;
        if off_bounds || (v.integer && (xi - xi.round()).abs() > INT_TOL) {
            return Err(MilpError::InvalidModel(format!("starting point has {} = {xi}", v.name)));
        }
    }
    let viol = model.max_violation(x);
    if viol > FEAS_TOL {
        return Err(MilpError::InvalidModel(format!("starting point violates the model by {viol:.3e}")));
    }
    Ok(())
}

/// Solves the LP relaxation (integrality flags ignored).
pub fn simplex_solve(model: &LinearModel) -> Result<SolveResult, MilpError> {
    model.validate()?;
    let mut sim = Simplex::from_model(model);
    let status = solve_with_restart(&mut sim)?;
    let (status, assignment, objective_value) = match status {
        LpStatus::Optimal => {
            let mut x = sim.structural_values();
            for (v, xi) in model.vars.iter().zip(x.iter_mut()) {
                *xi = xi.clamp(v.lower, v.upper);
            }
            let obj = model.objective_value(&x);
            (SolveStatus::Optimal, x, obj)
        }
        LpStatus::Infeasible => (SolveStatus::Infeasible, Vec::new(), f64::NAN),
        LpStatus::Unbounded => (SolveStatus::Unbounded, Vec::new(), f64::NAN),
    };
    Ok(SolveResult {
        status,
        assignment,
        objective_value,
        node_count: 0,
        lp_count: 1,
        cuts_added: 0,
    })
}

/// Solves from the current basis; on numerical trouble retries once from the
/// all-logical basis before giving up.
fn solve_with_restart(sim: &mut Simplex) -> Result<LpStatus, MilpError> {
    match sim.solve() {
        Ok(s) => Ok(s),
        Err(first) => {
            sim.slack_basis();
            sim.solve().map_err(|e| MilpError::Numerical(format!("{first}; after restart: {e}")))
        }
    }
}

/// Branch-and-bound with default options.
pub fn branch_and_bound(model: &LinearModel, separator: Option<&mut dyn Separator>) -> Result<SolveResult, MilpError> {
    branch_and_bound_with(model, separator, &BnbOptions::default())
}

pub fn branch_and_bound_with(
    model: &LinearModel,
    mut separator: Option<&mut dyn Separator>,
    options: &BnbOptions,
) -> Result<SolveResult, MilpError> {
    model.validate()?;
    let sign = match model.sense {
        ObjSense::Minimize => 1.0,
        ObjSense::Maximize => -1.0,
    };
    let mut sim = Simplex::from_model(model);
    let n = model.num_vars();
    let int_vars: Vec<usize> = (0..n).filter(|&j| model.vars[j].integer).collect();
    let root_bounds: Vec<(f64, f64)> = model.vars.iter().map(|v| (v.lower, v.upper)).collect();

    // Objective takes only integer values when all its terms are integral.
    let dense_c = model.dense_objective();
    let integral_objective = dense_c
        .iter()
        .enumerate()
        .all(|(j, &c)| c == 0.0 || (model.vars[j].integer && c.fract() == 0.0))
        && model.objective_constant.fract() == 0.0;
    let const_internal = sign * model.objective_constant;
    let prune_bound = |lp: f64| -> f64 {
        if integral_objective {
            // lp is internal (minimise) objective without constant.
            (lp + const_internal - 1e-6).ceil() - const_internal
        } else {
            lp
        }
    };

    let mut seen_cuts: HashSet<String> = HashSet::new();
    let mut incumbent: Option<(Vec<f64>, f64)> = match &options.incumbent {
        None => None,
        Some(x) => {
            check_start(model, x)?;
            let internal = sign * dense_c.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
            Some((x.clone(), internal))
        }
    };
    let mut heap: BinaryHeap<(Key, usize)> = BinaryHeap::new();
    let mut store: Vec<Option<Node>> = Vec::new();
    let mut node_count = 0usize;
    let mut lp_count = 0usize;
    let mut cuts_added = 0usize;
    let mut last_snapshot: Option<Rc<BasisSnapshot>> = None;
    let mut hit_limit = false;

    let root_snap = Rc::new(sim.snapshot());
    store.push(Some(Node {
        changes: Vec::new(),
        basis: root_snap,
        bound: f64::NEG_INFINITY,
        depth: 0,
    }));
    let diving = |inc: &Option<(Vec<f64>, f64)>| options.dive_until_incumbent && inc.is_none();
    heap.push((
        Key {
            bound: f64::NEG_INFINITY,
            depth: 0,
            id: 0,
            dive: diving(&incumbent),
        },
        0,
    ));

    let gap_tol = |inc: f64| 1e-9 * inc.abs().max(1.0);

    while let Some((_, id)) = heap.pop() {
        let node = store[id].take().expect("node stored once");
        if let Some((_, inc)) = &incumbent {
            if prune_bound(node.bound) >= inc - gap_tol(*inc) {
                continue;
            }
        }
        if let Some(limit) = options.node_limit {
            if node_count >= limit {
                hit_limit = true;
                break;
            }
        }
        node_count += 1;

        for &j in &int_vars {
            sim.set_bounds(j, root_bounds[j].0, root_bounds[j].1);
        }
        for &(j, lo, hi) in &node.changes {
            sim.set_bounds(j, lo, hi);
        }
        let same_basis = last_snapshot
            .take()
            .is_some_and(|s| Rc::ptr_eq(&s, &node.basis));
        if !same_basis && sim.restore(&node.basis).is_err() {
            sim.slack_basis();
        }

        let (lp_obj, x) = loop {
            lp_count += 1;
            let status = solve_with_restart(&mut sim)?;
            match status {
                LpStatus::Infeasible => break (None, Vec::new()),
                LpStatus::Unbounded => {
                    if node.depth == 0 {
                        return Ok(SolveResult {
                            status: SolveStatus::Unbounded,
                            assignment: Vec::new(),
                            objective_value: f64::NAN,
                            node_count,
                            lp_count,
                            cuts_added,
                        });
                    }
                    return Err(MilpError::Numerical("unbounded relaxation below the root".into()));
                }
                LpStatus::Optimal => {}
            }
            let x = sim.structural_values();
            let obj = sim.internal_objective();
            if let Some((_, inc)) = &incumbent {
                if prune_bound(obj) >= inc - gap_tol(*inc) {
                    break (None, Vec::new());
                }
            }
            let integral = int_vars.iter().all(|&j| (x[j] - x[j].round()).abs() <= INT_TOL);
            if let Some(sep) = separator.as_deref_mut() {
                if integral || options.separate_fractional {
                    let cuts = sep.separate(&x, integral);
                    if !cuts.is_empty() {
                        for c in &cuts {
                            let violation = c.violation(&x);
                            if violation < 1e-6 {
                                return Err(MilpError::NonViolatedCut { violation });
                            }
                            let row = to_row(c);
                            let sig = signature(&row);
                            if !seen_cuts.insert(sig) {
                                return Err(MilpError::DuplicateCut(c.name.clone()));
                            }
                            sim.add_row(row);
                            cuts_added += 1;
                        }
                        continue;
                    }
                }
            }
            break (Some(obj), x);
        };
        let Some(obj) = lp_obj else {
            continue;
        };

        // Most fractional integer variable, ties by lowest index.
        let mut branch: Option<(usize, f64)> = None;
        for &j in &int_vars {
            let f = x[j] - x[j].floor();
            let dist = f.min(1.0 - f);
            if dist > INT_TOL && branch.is_none_or(|(_, best)| dist > best + 1e-12) {
                branch = Some((j, dist));
            }
        }
        let Some((j, _)) = branch else {
            let better = incumbent.as_ref().is_none_or(|(_, inc)| obj < inc - gap_tol(*inc));
            if better {
                incumbent = Some((x, obj));
                // Switching from diving to best-bound re-keys open nodes.
                if options.dive_until_incumbent {
                    let drained: Vec<_> = heap.drain().collect();
                    for (k, nid) in drained {
                        heap.push((Key { dive: false, ..k }, nid));
                    }
                }
            }
            continue;
        };

        let snap = Rc::new(sim.snapshot());
        last_snapshot = Some(snap.clone());
        let v = x[j];
        let (lo, hi) = (sim.lower(j), sim.upper(j));
        let children = [(v.ceil(), hi), (lo, v.floor())];
        for (clo, chi) in children {
            let mut changes = node.changes.clone();
            changes.push((j, clo, chi));
            let cid = store.len();
            store.push(Some(Node {
                changes,
                basis: snap.clone(),
                bound: obj,
                depth: node.depth + 1,
            }));
            heap.push((
                Key {
                    bound: obj,
                    depth: node.depth + 1,
                    id: cid,
                    dive: diving(&incumbent),
                },
                cid,
            ));
        }
    }

    let status = if hit_limit {
        SolveStatus::NodeLimit
    } else if incumbent.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    let (assignment, objective_value) = match incumbent {
        Some((x, _)) => finish(model, x)?,
        None => (Vec::new(), f64::NAN),
    };
    Ok(SolveResult {
        status,
        assignment,
        objective_value,
        node_count,
        lp_count,
        cuts_added,
    })
}
