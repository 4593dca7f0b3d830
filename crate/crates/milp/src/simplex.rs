//! Bounded revised simplex with an explicit dense basis inverse.
//!
//! Rows are turned into equalities `a.x + s = b` with one logical column per
//! row; inequality direction is carried by the logical's bounds. Structural
//! columns are stored sparse, the basis inverse dense (column-major). Primal
//! phase 1 minimises the sum of infeasibilities; the dual simplex re-optimises
//! after bound changes or appended rows, which is how branch-and-bound nodes
//! are solved.

use crate::error::MilpError;
use crate::model::{Cmp, LinearModel, ObjSense};

pub(crate) const PRIMAL_TOL: f64 = 1e-7;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DUAL_PIVOT_TOL: f64 = 1e-7;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_LIMIT: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basis header saved by branch-and-bound nodes for warm starts.
#[derive(Debug, Clone)]
pub(crate) struct BasisSnapshot {
    pub head: Vec<usize>,
    pub status: Vec<VarStatus>,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct RowData {
    pub coeffs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// LP in computational form plus the simplex working state.
pub(crate) struct Simplex {
    n: usize,
    m: usize,
    rows: Vec<RowData>,
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    head: Vec<usize>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    binv: Vec<f64>,
    since_refactor: usize,
    /// Pivots over the lifetime of this object.
    pub iterations: usize,
    /// Pivot budget of a single `solve` call.
    pub max_iterations: usize,
    solve_start: usize,
}

/// Deterministic value in [0, 1) per index (splitmix64 finaliser).
fn unit_hash(mut z: u64) -> f64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn logical_bounds(cmp: Cmp) -> (f64, f64) {
    match cmp {
        Cmp::Le => (0.0, f64::INFINITY),
        Cmp::Ge => (f64::NEG_INFINITY, 0.0),
        Cmp::Eq => (0.0, 0.0),
    }
}

impl Simplex {
    pub fn from_model(model: &LinearModel) -> Self {
        let n = model.num_vars();
        let sign = match model.sense {
            ObjSense::Minimize => 1.0,
            ObjSense::Maximize => -1.0,
        };
        let mut cost: Vec<f64> = model.dense_objective().into_iter().map(|c| sign * c).collect();
        let mut lower: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
        let rows: Vec<RowData> = model
            .constraints
            .iter()
            .map(|c| {
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
            })
            .collect();
        let m = rows.len();
        for r in &rows {
            let (l, u) = logical_bounds(r.cmp);
            lower.push(l);
            upper.push(u);
            cost.push(0.0);
        }
        let mut s = Simplex {
            n,
            m,
            rows,
            col_start: Vec::new(),
            col_rows: Vec::new(),
            col_vals: Vec::new(),
            cost,
            lower,
            upper,
            head: Vec::new(),
            status: Vec::new(),
            x: Vec::new(),
            binv: Vec::new(),
            since_refactor: 0,
            iterations: 0,
            max_iterations: 200_000,
            solve_start: 0,
        };
        s.rebuild_columns();
        s.slack_basis();
        s
    }

    fn rebuild_columns(&mut self) {
        let mut counts = vec![0usize; self.n + 1];
        for r in &self.rows {
            for &(j, _) in &r.coeffs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..self.n {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[self.n];
        let mut fill = counts.clone();
        let mut col_rows = vec![0usize; nnz];
        let mut col_vals = vec![0.0; nnz];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                col_rows[fill[j]] = i;
                col_vals[fill[j]] = a;
                fill[j] += 1;
            }
        }
        self.col_start = counts;
        self.col_rows = col_rows;
        self.col_vals = col_vals;
    }

    fn total(&self) -> usize {
        self.n + self.m
    }

    pub fn structural_values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.lower[j]
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.upper[j]
    }

    /// Objective value in minimisation form (internal sign).
    pub fn internal_objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn nonbasic_value(&self, j: usize, st: VarStatus) -> f64 {
        match st {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            VarStatus::Free => 0.0,
            VarStatus::Basic => self.x[j],
        }
    }

    fn default_status(&self, j: usize) -> VarStatus {
        if self.lower[j].is_finite() {
            VarStatus::AtLower
        } else if self.upper[j].is_finite() {
            VarStatus::AtUpper
        } else {
            VarStatus::Free
        }
    }

    /// Resets to the all-logical basis.
    pub fn slack_basis(&mut self) {
        let total = self.total();
        self.status = (0..total).map(|j| self.default_status(j)).collect();
        self.x = vec![0.0; total];
        self.head = (self.n..total).collect();
        for &j in &self.head {
            self.status[j] = VarStatus::Basic;
        }
        for j in 0..total {
            if self.status[j] != VarStatus::Basic {
                self.x[j] = self.nonbasic_value(j, self.status[j]);
            }
        }
        let m = self.m;
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        self.since_refactor = 0;
        self.recompute_basic_values();
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            head: self.head.clone(),
            status: self.status.clone(),
            rows: self.m,
        }
    }

    /// Restores a basis saved earlier; rows appended since then enter with
    /// their logicals basic.
    pub fn restore(&mut self, snap: &BasisSnapshot) -> Result<(), MilpError> {
        let total = self.total();
        let mut status = Vec::with_capacity(total);
        status.extend_from_slice(&snap.status[..self.n]);
        status.extend_from_slice(&snap.status[self.n..self.n + snap.rows]);
        let mut head = snap.head.clone();
        for i in snap.rows..self.m {
            status.push(VarStatus::Basic);
            head.push(self.n + i);
        }
        self.status = status;
        self.head = head;
        self.fix_nonbasic_statuses();
        self.refactor()?;
        self.recompute_basic_values();
        Ok(())
    }

    /// Keeps nonbasic statuses consistent with the current bounds.
    fn fix_nonbasic_statuses(&mut self) {
        for j in 0..self.total() {
            let st = self.status[j];
            let fixed = match st {
                VarStatus::Basic => continue,
                VarStatus::AtLower if self.lower[j].is_finite() => st,
                VarStatus::AtUpper if self.upper[j].is_finite() => st,
                VarStatus::Free if !self.lower[j].is_finite() && !self.upper[j].is_finite() => st,
                _ => self.default_status(j),
            };
            self.status[j] = fixed;
            self.x[j] = self.nonbasic_value(j, fixed);
        }
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
        if self.status[j] != VarStatus::Basic {
            let st = match self.status[j] {
                VarStatus::AtUpper if upper.is_finite() => VarStatus::AtUpper,
                VarStatus::AtLower if lower.is_finite() => VarStatus::AtLower,
                _ => self.default_status(j),
            };
            self.status[j] = st;
            self.x[j] = self.nonbasic_value(j, st);
        }
    }

    /// Appends a row; its logical becomes basic and the inverse is bordered.
    pub fn add_row(&mut self, row: RowData) {
        let m = self.m;
        let new_m = m + 1;
        // Bordered inverse: [[B^-1, 0], [-a_B B^-1, 1]].
        let a_b: Vec<f64> = {
            let mut dense = vec![0.0; self.n];
            for &(j, a) in &row.coeffs {
                dense[j] += a;
            }
            self.head
                .iter()
                .map(|&h| if h < self.n { dense[h] } else { 0.0 })
                .collect()
        };
        let mut last_row = vec![0.0; m];
        for k in 0..m {
            let col = &self.binv[k * m..(k + 1) * m];
            last_row[k] = -a_b.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
        }
        let mut binv = vec![0.0; new_m * new_m];
        for k in 0..m {
            binv[k * new_m..k * new_m + m].copy_from_slice(&self.binv[k * m..(k + 1) * m]);
            binv[k * new_m + m] = last_row[k];
        }
        binv[m * new_m + m] = 1.0;
        self.binv = binv;

        let (l, u) = logical_bounds(row.cmp);
        let logical = self.total();
        self.lower.push(l);
        self.upper.push(u);
        self.cost.push(0.0);
        self.status.push(VarStatus::Basic);
        let activity: f64 = row.coeffs.iter().map(|&(j, a)| a * self.x[j]).sum();
        self.x.push(row.rhs - activity);
        self.head.push(logical);
        self.rows.push(row);
        self.m = new_m;
        self.rebuild_columns();
    }

    fn column_dot(&self, j: usize, v: &[f64]) -> f64 {
        if j < self.n {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            let mut acc = 0.0;
            for p in s..e {
                acc += self.col_vals[p] * v[self.col_rows[p]];
            }
            acc
        } else {
            v[j - self.n]
        }
    }

    /// `B^-1 a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        let mut axpy = |k: usize, a: f64| {
            let col = &self.binv[k * m..(k + 1) * m];
            for (o, b) in out.iter_mut().zip(col) {
                *o += a * b;
            }
        };
        if j < self.n {
            for p in self.col_start[j]..self.col_start[j + 1] {
                axpy(self.col_rows[p], self.col_vals[p]);
            }
        } else {
            axpy(j - self.n, 1.0);
        }
        out
    }

    /// Row `r` of `B^-1`.
    fn btran_unit(&self, r: usize) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|k| self.binv[k * m + r]).collect()
    }

    /// `y = c_B^T B^-1`.
    fn duals(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|k| {
                let col = &self.binv[k * m..(k + 1) * m];
                cb.iter().zip(col).map(|(c, b)| c * b).sum()
            })
            .collect()
    }

    fn refactor(&mut self) -> Result<(), MilpError> {
        let m = self.m;
        // Dense B (row-major, augmented with identity), inverted by
        // Gauss-Jordan. Logical columns go first and structurals by
        // increasing length, and row updates only touch the nonzeros of the
        // pivot row, which keeps sparse bases cheap.
        let w = 2 * m;
        let mut a = vec![0.0; m * w];
        let nnz = |j: usize| if j < self.n { self.col_start[j + 1] - self.col_start[j] } else { 0 };
        for (pos, &j) in self.head.iter().enumerate() {
            if j < self.n {
                for p in self.col_start[j]..self.col_start[j + 1] {
                    a[self.col_rows[p] * w + pos] = self.col_vals[p];
                }
            } else {
                a[(j - self.n) * w + pos] = 1.0;
            }
        }
        for i in 0..m {
            a[i * w + m + i] = 1.0;
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&pos| (nnz(self.head[pos]), pos));
        let mut used = vec![false; m];
        let mut row_of = vec![0usize; m];
        let mut nz = Vec::with_capacity(w);
        for &pos in &order {
            let mut piv = usize::MAX;
            let mut best = 0.0;
            for r in 0..m {
                let v = a[r * w + pos].abs();
                if !used[r] && v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-11 {
                return Err(MilpError::Numerical(format!(
                    "singular basis during refactorization (position {pos} of {m})"
                )));
            }
            used[piv] = true;
            row_of[pos] = piv;
            let p = a[piv * w + pos];
            nz.clear();
            for k in 0..w {
                let v = &mut a[piv * w + k];
                if *v != 0.0 {
                    *v /= p;
                    nz.push(k);
                }
            }
            let (before, rest) = a.split_at_mut(piv * w);
            let (pivot_row, after) = rest.split_at_mut(w);
            for (base, chunk) in [(0usize, before), (piv + 1, after)] {
                for (i, row) in chunk.chunks_exact_mut(w).enumerate() {
                    let _ = base + i;
                    let f = row[pos];
                    if f != 0.0 {
                        for &k in &nz {
                            row[k] -= f * pivot_row[k];
                        }
                        row[pos] = 0.0;
                    }
                }
            }
        }
        // Row `row_of[pos]` of the right half is row `pos` of B^-1; store
        // column-major.
        let mut binv = vec![0.0; m * m];
        for pos in 0..m {
            let src = &a[row_of[pos] * w + m..(row_of[pos] + 1) * w];
            for k in 0..m {
                binv[k * m + pos] = src[k];
            }
        }
        self.binv = binv;
        self.since_refactor = 0;
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut r: Vec<f64> = self.rows.iter().map(|row| row.rhs).collect();
        for j in 0..self.total() {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < self.n {
                for p in self.col_start[j]..self.col_start[j + 1] {
                    r[self.col_rows[p]] -= self.col_vals[p] * xj;
                }
            } else {
                r[j - self.n] -= xj;
            }
        }
        let mut xb = vec![0.0; m];
        for k in 0..m {
            if r[k] == 0.0 {
                continue;
            }
            let col = &self.binv[k * m..(k + 1) * m];
            for (o, b) in xb.iter_mut().zip(col) {
                *o += r[k] * b;
            }
        }
        for (i, &h) in self.head.iter().enumerate() {
            self.x[h] = xb[i];
        }
    }

    fn pivot(&mut self, q: usize, r: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[r];
        for k in 0..m {
            let col = &mut self.binv[k * m..(k + 1) * m];
            let v = col[r] / p;
            if v != 0.0 {
                for (i, c) in col.iter_mut().enumerate() {
                    if i != r {
                        *c -= alpha[i] * v;
                    }
                }
            }
            col[r] = v;
        }
        let leaving = self.head[r];
        self.head[r] = q;
        self.status[q] = VarStatus::Basic;
        let _ = leaving;
        self.since_refactor += 1;
    }

    fn maybe_refactor(&mut self) -> Result<(), MilpError> {
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
            self.recompute_basic_values();
        }
        Ok(())
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] - PRIMAL_TOL {
            self.lower[j] - v
        } else if v > self.upper[j] + PRIMAL_TOL {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    fn primal_infeasible(&self) -> bool {
        self.head.iter().any(|&h| self.infeasibility(h) > 0.0)
    }

    fn reduced_costs(&self, y: &[f64], phase1: bool) -> Vec<f64> {
        (0..self.total())
            .map(|j| {
                if self.status[j] == VarStatus::Basic {
                    0.0
                } else {
                    let c = if phase1 { 0.0 } else { self.cost[j] };
                    c - self.column_dot(j, y)
                }
            })
            .collect()
    }

    fn is_dual_feasible(&self, d: &[f64]) -> bool {
        (0..self.total()).all(|j| match self.status[j] {
            VarStatus::Basic => true,
            _ if self.lower[j] == self.upper[j] => true,
            VarStatus::AtLower => d[j] >= -1e-7,
            VarStatus::AtUpper => d[j] <= 1e-7,
            VarStatus::Free => d[j].abs() <= 1e-7,
        })
    }

    /// Solves from the current basis. Uses the dual simplex when the basis is
    /// dual feasible, the composite primal simplex otherwise.
    pub fn solve(&mut self) -> Result<LpStatus, MilpError> {
        self.solve_start = self.iterations;
        self.fix_nonbasic_statuses();
        self.recompute_basic_values();
        let cb: Vec<f64> = self.head.iter().map(|&h| self.cost[h]).collect();
        let y = self.duals(&cb);
        let d = self.reduced_costs(&y, false);
        if self.primal_infeasible() && self.is_dual_feasible(&d) {
            match self.dual_simplex()? {
                LpStatus::Infeasible => return Ok(LpStatus::Infeasible),
                _ => {}
            }
        }
        self.primal_simplex()
    }

    fn primal_simplex(&mut self) -> Result<LpStatus, MilpError> {
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut verified = false;
        loop {
            self.iterations += 1;
            if self.iterations - self.solve_start > self.max_iterations {
                return Err(MilpError::Numerical(format!(
                    "simplex iteration limit {} exceeded",
                    self.max_iterations
                )));
            }
            self.maybe_refactor()?;
            let phase1 = self.primal_infeasible();
            let cb: Vec<f64> = self
                .head
                .iter()
                .map(|&h| {
                    if phase1 {
                        let v = self.x[h];
                        if v < self.lower[h] - PRIMAL_TOL {
                            -1.0
                        } else if v > self.upper[h] + PRIMAL_TOL {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        self.cost[h]
                    }
                })
                .collect();
            let y = self.duals(&cb);
            let d = self.reduced_costs(&y, phase1);

            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.total() {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let dj = d[j];
                let eligible = match st {
                    VarStatus::AtLower => dj < -DUAL_TOL,
                    VarStatus::AtUpper => dj > DUAL_TOL,
                    VarStatus::Free => dj.abs() > DUAL_TOL,
                    VarStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, dj));
                    break;
                }
                if entering.is_none_or(|(_, best)| dj.abs() > best.abs()) {
                    entering = Some((j, dj));
                }
            }

            let Some((q, dq)) = entering else {
                if phase1 {
                    return Ok(LpStatus::Infeasible);
                }
                if !verified {
                    // Clean up drift before declaring optimality.
                    self.refactor()?;
                    self.recompute_basic_values();
                    verified = true;
                    if self.primal_infeasible() {
                        continue;
                    }
                }
                return Ok(LpStatus::Optimal);
            };
            verified = false;

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);
            let mut t_best = if self.lower[q].is_finite() && self.upper[q].is_finite() {
                self.upper[q] - self.lower[q]
            } else {
                f64::INFINITY
            };
            let mut leave: Option<(usize, f64, f64)> = None; // (row, target, |a|)
            for (i, &ai) in alpha.iter().enumerate() {
                let a = dir * ai;
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let h = self.head[i];
                let (xi, li, ui) = (self.x[h], self.lower[h], self.upper[h]);
                let (limit, target) = if a > 0.0 {
                    if phase1 && xi > ui + PRIMAL_TOL {
                        ((xi - ui) / a, ui)
                    } else if xi >= li - PRIMAL_TOL && li.is_finite() {
                        (((xi - li) / a).max(0.0), li)
                    } else {
                        continue;
                    }
                } else if phase1 && xi < li - PRIMAL_TOL {
                    ((li - xi) / -a, li)
                } else if xi <= ui + PRIMAL_TOL && ui.is_finite() {
                    (((ui - xi) / -a).max(0.0), ui)
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < t_best,
                    Some((r, _, best_a)) => {
                        if bland {
                            limit < t_best - 1e-12 || (limit <= t_best + 1e-12 && h < self.head[r])
                        } else {
                            limit < t_best - 1e-12 || (limit <= t_best + 1e-12 && a.abs() > best_a)
                        }
                    }
                };
                if better {
                    t_best = limit;
                    leave = Some((i, target, a.abs()));
                }
            }

            if t_best.is_infinite() {
                if phase1 {
                    return Err(MilpError::Numerical("unbounded ray during phase 1".into()));
                }
                return Ok(LpStatus::Unbounded);
            }

            let step = dir * t_best;
            if step != 0.0 {
                for (i, &ai) in alpha.iter().enumerate() {
                    let h = self.head[i];
                    self.x[h] -= step * ai;
                }
                self.x[q] += step;
            }
            if t_best <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_LIMIT {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }

            match leave {
                None => {
                    // Bound flip of the entering variable.
                    self.status[q] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.x[q] = self.nonbasic_value(q, self.status[q]);
                }
                Some((r, target, _)) => {
                    let leaving = self.head[r];
                    self.pivot(q, r, &alpha);
                    self.x[leaving] = target;
                    self.status[leaving] = if target == self.lower[leaving] {
                        VarStatus::AtLower
                    } else {
                        VarStatus::AtUpper
                    };
                }
            }
        }
    }

    /// Dual simplex on slightly perturbed costs (assignment-like models are
    /// heavily dual degenerate and stall otherwise). The true costs are put
    /// back afterwards; the primal pass that follows repairs any resulting
    /// dual infeasibility.
    fn dual_simplex(&mut self) -> Result<LpStatus, MilpError> {
        let original = self.cost.clone();
        for j in 0..self.total() {
            let shift = 1e-7 * (1.0 + self.cost[j].abs()) * (1.0 + unit_hash(j as u64));
            match self.status[j] {
                VarStatus::AtLower => self.cost[j] += shift,
                VarStatus::AtUpper => self.cost[j] -= shift,
                _ => {}
            }
        }
        let out = self.dual_simplex_inner();
        self.cost = original;
        out
    }

    fn dual_simplex_inner(&mut self) -> Result<LpStatus, MilpError> {
        let mut stall = 0usize;
        let mut bland = false;
        let mut last_obj = f64::NEG_INFINITY;
        loop {
            self.iterations += 1;
            if self.iterations - self.solve_start > self.max_iterations {
                return Err(MilpError::Numerical(format!(
                    "dual simplex iteration limit {} exceeded",
                    self.max_iterations
                )));
            }
            self.maybe_refactor()?;

            // Leaving row: largest infeasibility (lowest variable index under Bland).
            let mut leave: Option<(usize, f64)> = None;
            for (i, &h) in self.head.iter().enumerate() {
                let inf = self.infeasibility(h);
                if inf <= 0.0 {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((r, best)) => {
                        if bland {
                            h < self.head[r]
                        } else {
                            inf > best
                        }
                    }
                };
                if better {
                    leave = Some((i, inf));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(LpStatus::Optimal);
            };
            let h = self.head[r];
            let to_lower = self.x[h] < self.lower[h];
            let target = if to_lower { self.lower[h] } else { self.upper[h] };

            let cb: Vec<f64> = self.head.iter().map(|&k| self.cost[k]).collect();
            let y = self.duals(&cb);
            let rho = self.btran_unit(r);

            // Harris two-pass ratio test: the first pass finds the largest
            // step allowed with dual infeasibilities up to DUAL_TOL, the second
            // takes the biggest pivot among candidates within that step.
            let mut cands: Vec<(usize, f64, f64)> = Vec::new(); // (j, |d_j|, |alpha_rj|)
            let mut theta_max = f64::INFINITY;
            for j in 0..self.total() {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let arj = self.column_dot(j, &rho);
                if arj.abs() < DUAL_PIVOT_TOL {
                    continue;
                }
                // x_h changes by -arj * dx_j.
                let ok = match (st, to_lower) {
                    (VarStatus::AtLower, true) => arj < 0.0,
                    (VarStatus::AtUpper, true) => arj > 0.0,
                    (VarStatus::AtLower, false) => arj > 0.0,
                    (VarStatus::AtUpper, false) => arj < 0.0,
                    (VarStatus::Free, _) => true,
                    (VarStatus::Basic, _) => false,
                };
                if !ok {
                    continue;
                }
                let dj = self.cost[j] - self.column_dot(j, &y);
                let slack = match st {
                    VarStatus::AtLower => dj.max(0.0),
                    VarStatus::AtUpper => (-dj).max(0.0),
                    _ => dj.abs(),
                };
                theta_max = theta_max.min((slack + DUAL_TOL) / arj.abs());
                cands.push((j, slack, arj.abs()));
            }
            let mut entering: Option<(usize, f64, f64)> = None; // (j, ratio, |alpha|)
            for &(j, slack, a) in &cands {
                let ratio = slack / a;
                if ratio > theta_max {
                    continue;
                }
                let better = match entering {
                    None => true,
                    Some((bj, br, ba)) => {
                        if bland {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && j < bj)
                        } else {
                            a > ba || (a == ba && j < bj)
                        }
                    }
                };
                if better {
                    entering = Some((j, ratio, a));
                }
            }
            let Some((q, _, _)) = entering else {
                return Ok(LpStatus::Infeasible);
            };

            let alpha = self.ftran(q);
            let t = (self.x[h] - target) / alpha[r];
            for (i, &ai) in alpha.iter().enumerate() {
                let k = self.head[i];
                self.x[k] -= t * ai;
            }
            self.x[q] += t;
            self.pivot(q, r, &alpha);
            self.x[h] = target;
            self.status[h] = if to_lower { VarStatus::AtLower } else { VarStatus::AtUpper };

            let obj = self.internal_objective();
            if obj <= last_obj + 1e-12 {
                stall += 1;
                if stall > DEGENERATE_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
            last_obj = obj;
        }
    }
}
