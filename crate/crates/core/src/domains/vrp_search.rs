//! Exact single-step routing search over customer partitions.
//!
//! Minimises `sum_v L_v + beta * F(o + L)` where `F` is the max-min gap or
//! the maximum over vehicles, `o` the per-vehicle offsets. Every partition of
//! the customers into one non-empty block per vehicle is covered by a
//! depth-first assignment of customers to vehicles. For a block only its set
//! of achievable closed-tour lengths matters, so:
//!
//! * Held-Karp tables give each block's shortest and longest tour; both are
//!   monotone under adding customers, which bounds partial assignments;
//! * for the gap metric, complete assignments are swept over their sorted
//!   tour lengths, always lengthening the vehicle that currently has the
//!   smallest `o_v + L_v` (longer tours can pay off by lifting the minimum).
//!
//! Practical up to about 13 customers.

use std::collections::HashMap;
use std::rc::Rc;

use super::vrp::{VrpInstance, VrpSolution};
use crate::error::{CoreError, Result};

pub const MAX_SEARCH_CUSTOMERS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteFairness {
    None,
    Gap,
    Minimax,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RouteSearchStats {
    /// Search nodes (partial assignments) visited.
    pub nodes: u64,
    /// Complete assignments whose tour lengths were swept.
    pub sweeps: u64,
}

struct Tables {
    c: usize,
    /// `d[a][b]` over local nodes: 0 is the depot, `i + 1` is customer `i`.
    d: Vec<Vec<f64>>,
    min_tour: Vec<f64>,
    max_tour: Vec<f64>,
    lengths: HashMap<u32, Rc<Vec<f64>>>,
}

impl Tables {
    fn new(inst: &VrpInstance) -> Self {
        let customers = inst.customers();
        let c = customers.len();
        let nodes: Vec<usize> = std::iter::once(inst.depot).chain(customers.iter().copied()).collect();
        let d: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&a| nodes.iter().map(|&b| inst.distance[a][b]).collect())
            .collect();
        let (min_tour, max_tour) = (held_karp(&d, c, f64::min), held_karp(&d, c, f64::max));
        Self {
            c,
            d,
            min_tour,
            max_tour,
            lengths: HashMap::new(),
        }
    }

    /// Calls `f(order, length)` for every closed tour through `mask`, each
    /// undirected tour once, lengths summed in driving order.
    fn for_each_tour(&self, mask: u32, f: &mut dyn FnMut(&[usize], f64)) {
        let members: Vec<usize> = (0..self.c).filter(|&i| mask >> i & 1 == 1).collect();
        let mut order = Vec::with_capacity(members.len());
        let mut used = vec![false; members.len()];
        self.dfs(&members, &mut used, &mut order, 0.0, f);
    }

    fn dfs(&self, members: &[usize], used: &mut [bool], order: &mut Vec<usize>, len: f64, f: &mut dyn FnMut(&[usize], f64)) {
        if order.len() == members.len() {
            let last = *order.last().unwrap();
            // Skip the reversed copy of every tour.
            if order.len() < 2 || order[0] < last {
                f(order, len + self.d[last + 1][0]);
            }
            return;
        }
        for (k, &m) in members.iter().enumerate() {
            if used[k] {
                continue;
            }
            let from = order.last().map_or(0, |&p| p + 1);
            used[k] = true;
            order.push(m);
            self.dfs(members, used, order, len + self.d[from][m + 1], f);
            order.pop();
            used[k] = false;
        }
    }

    /// Sorted distinct tour lengths of a block.
    fn lengths(&mut self, mask: u32) -> Rc<Vec<f64>> {
        if let Some(l) = self.lengths.get(&mask) {
            return l.clone();
        }
        let mut out = Vec::new();
        self.for_each_tour(mask, &mut |_, len| out.push(len));
        out.sort_by(f64::total_cmp);
        out.dedup();
        let rc = Rc::new(out);
        self.lengths.insert(mask, rc.clone());
        rc
    }

    /// A tour through `mask` whose length is closest to `target` (first in
    /// search order on ties), as local customer indices.
    fn tour_with_length(&self, mask: u32, target: f64) -> Vec<usize> {
        let mut best: Option<(f64, Vec<usize>)> = None;
        self.for_each_tour(mask, &mut |order, len| {
            let err = (len - target).abs();
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, order.to_vec()));
            }
        });
        best.expect("non-empty block").1
    }
}

/// Best (per `pick`) closed tour from the depot through every subset.
fn held_karp(d: &[Vec<f64>], c: usize, pick: fn(f64, f64) -> f64) -> Vec<f64> {
    let full = 1usize << c;
    let mut path = vec![f64::NAN; full * c];
    for j in 0..c {
        path[(1 << j) * c + j] = d[0][j + 1];
    }
    for mask in 1..full {
        for j in 0..c {
            let here = path[mask * c + j];
            if mask >> j & 1 == 0 || here.is_nan() {
                continue;
            }
            for k in 0..c {
                if mask >> k & 1 == 1 {
                    continue;
                }
                let next = mask | 1 << k;
                let cand = here + d[j + 1][k + 1];
                let slot = &mut path[next * c + k];
                *slot = if slot.is_nan() { cand } else { pick(*slot, cand) };
            }
        }
    }
    let mut tour = vec![f64::NAN; full];
    for mask in 1..full {
        for j in 0..c {
            let p = path[mask * c + j];
            if !p.is_nan() {
                let t = p + d[j + 1][0];
                tour[mask] = if tour[mask].is_nan() { t } else { pick(tour[mask], t) };
            }
        }
    }
    tour
}

struct Best {
    value: f64,
    /// Block mask and tour length per vehicle.
    choice: Vec<(u32, f64)>,
}

impl Best {
    fn beaten_by(&self, v: f64) -> bool {
        self.choice.is_empty() || v < self.value - 1e-9 * self.value.abs().max(1.0)
    }
}

struct Search<'a> {
    tables: Tables,
    k: usize,
    beta: f64,
    fairness: RouteFairness,
    offsets: &'a [f64],
    /// Vehicles are interchangeable, so only canonical labellings are built.
    symmetric: bool,
    /// Customers in assignment order and the mask of `order[i..]`.
    order: Vec<usize>,
    rest: Vec<u32>,
    blocks: Vec<u32>,
    best: Best,
    stats: RouteSearchStats,
}

impl Search<'_> {
    /// Lower bound over all completions: the summed shortest tours, plus the
    /// fairness term priced with shortest tours for the maximum and longest
    /// completions for the minimum.
    fn bound(&self, rest: u32) -> f64 {
        let (min_t, max_t) = (&self.tables.min_tour, &self.tables.max_tour);
        let (mut sum, mut hi, mut lo) = (0.0, f64::NEG_INFINITY, f64::INFINITY);
        for (v, &b) in self.blocks.iter().enumerate() {
            let shortest = if b == 0 { 0.0 } else { min_t[b as usize] };
            sum += shortest;
            hi = hi.max(self.offsets[v] + shortest);
            let widest = b | rest;
            lo = lo.min(self.offsets[v] + if widest == 0 { 0.0 } else { max_t[widest as usize] });
        }
        sum + match self.fairness {
            RouteFairness::None => 0.0,
            RouteFairness::Minimax => self.beta * hi,
            RouteFairness::Gap => self.beta * (hi - lo).max(0.0),
        }
    }

    fn run(&mut self, i: usize, used: usize) {
        self.stats.nodes += 1;
        let empty = self.blocks.iter().filter(|&&b| b == 0).count();
        if empty > self.order.len() - i {
            return;
        }
        if !self.best.beaten_by(self.bound(self.rest[i])) {
            return;
        }
        if i == self.order.len() {
            self.leaf();
            return;
        }
        let cust = self.order[i];
        let limit = if self.symmetric { (used + 1).min(self.k) } else { self.k };
        for v in 0..limit {
            self.blocks[v] |= 1 << cust;
            self.run(i + 1, used.max(v + 1));
            self.blocks[v] &= !(1 << cust);
        }
    }

    fn leaf(&mut self) {
        let min_t = &self.tables.min_tour;
        let shortest: Vec<f64> = self.blocks.iter().map(|&b| min_t[b as usize]).collect();
        let sum: f64 = shortest.iter().sum();
        let u: Vec<f64> = shortest.iter().zip(self.offsets).map(|(l, o)| o + l).collect();
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        // Shortest tours everywhere: exact without a gap term, feasible with one.
        let value = match self.fairness {
            RouteFairness::None => sum,
            RouteFairness::Minimax => sum + self.beta * hi,
            RouteFairness::Gap => sum + self.beta * (hi - lo),
        };
        if self.best.beaten_by(value) {
            self.best.value = value;
            self.best.choice = self.blocks.iter().copied().zip(shortest).collect();
        }
        if self.fairness == RouteFairness::Gap && self.best.beaten_by(self.bound(0)) {
            self.sweep();
        }
    }

    fn sweep(&mut self) {
        self.stats.sweeps += 1;
        let k = self.k;
        let blocks = self.blocks.clone();
        let lists: Vec<Rc<Vec<f64>>> = blocks.iter().map(|&m| self.tables.lengths(m)).collect();
        let mut pos = vec![0usize; k];
        loop {
            let sum: f64 = (0..k).map(|v| lists[v][pos[v]]).sum();
            if !self.best.beaten_by(sum) {
                return;
            }
            let mut arg = 0;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in 0..k {
                let u = self.offsets[v] + lists[v][pos[v]];
                if u < lo {
                    lo = u;
                    arg = v;
                }
                hi = hi.max(u);
            }
            let value = sum + self.beta * (hi - lo);
            if self.best.beaten_by(value) {
                self.best.value = value;
                self.best.choice = (0..k).map(|v| (blocks[v], lists[v][pos[v]])).collect();
            }
            pos[arg] += 1;
            if pos[arg] == lists[arg].len() {
                return;
            }
        }
    }
}

/// Exact optimum of the single-step routing objective. Offsets are ignored
/// when `fairness` is `None` or `beta` is 0.
pub fn vrp_partition_search(
    inst: &VrpInstance,
    beta: f64,
    fairness: RouteFairness,
    offsets: &[f64],
) -> Result<(VrpSolution, RouteSearchStats)> {
    inst.validate()?;
    let k = inst.vehicles.len();
    let customers = inst.customers();
    let c = customers.len();
    if c > MAX_SEARCH_CUSTOMERS {
        return Err(CoreError::Argument(format!(
            "partition search handles at most {MAX_SEARCH_CUSTOMERS} customers, got {c}"
        )));
    }
    if c < k {
        return Err(CoreError::Infeasible(format!("{c} customers for {k} vehicles")));
    }
    if offsets.len() != k {
        return Err(CoreError::Structural(format!("{} offsets for {k} vehicles", offsets.len())));
    }
    let fairness = if beta > 0.0 { fairness } else { RouteFairness::None };
    let symmetric = fairness == RouteFairness::None || offsets.windows(2).all(|w| w[0] == w[1]);
    let tables = Tables::new(inst);
    // Far customers first: they fix the expensive tours early.
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| tables.d[0][b + 1].total_cmp(&tables.d[0][a + 1]).then(a.cmp(&b)));
    let mut rest = vec![0u32; c + 1];
    for i in (0..c).rev() {
        rest[i] = rest[i + 1] | 1 << order[i];
    }
    let mut search = Search {
        tables,
        k,
        beta,
        fairness,
        offsets,
        symmetric,
        order,
        rest,
        blocks: vec![0; k],
        best: Best {
            value: f64::INFINITY,
            choice: Vec::new(),
        },
        stats: RouteSearchStats::default(),
    };
    search.run(0, 0);
    let routes = search
        .best
        .choice
        .iter()
        .map(|&(mask, len)| {
            search
                .tables
                .tour_with_length(mask, len)
                .into_iter()
                .map(|i| customers[i])
                .collect()
        })
        .collect();
    Ok((VrpSolution { routes }, search.stats))
}
