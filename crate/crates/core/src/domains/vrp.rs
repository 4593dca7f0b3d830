//! Vehicle routing: every non-depot point is visited exactly once and every
//! vehicle leaves the depot on a single closed tour.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use tempfair_milp::{Cmp, Constraint, LinExpr, LinearModel, ObjSense, Separator, VarId};

use super::text::Lines;
use super::IpObjective;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrpInstance {
    /// Integer grid coordinates.
    pub points: Vec<(i64, i64)>,
    pub depot: usize,
    pub vehicles: Vec<String>,
    /// Euclidean distance matrix over `points`.
    pub distance: Vec<Vec<f64>>,
}

/// Per vehicle, the visited non-depot points in tour order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrpSolution {
    pub routes: Vec<Vec<usize>>,
}

impl VrpInstance {
    pub fn new(points: Vec<(i64, i64)>, depot: usize, vehicles: Vec<String>) -> Result<Self> {
        let distance = points
            .iter()
            .map(|&(ax, ay)| {
                points
                    .iter()
                    .map(|&(bx, by)| (((ax - bx) as f64).powi(2) + ((ay - by) as f64).powi(2)).sqrt())
                    .collect()
            })
            .collect();
        let inst = Self {
            points,
            depot,
            vehicles,
            distance,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depot >= self.points.len() {
            return Err(CoreError::Argument("depot index out of range".into()));
        }
        if self.vehicles.is_empty() {
            return Err(CoreError::Argument("at least one vehicle required".into()));
        }
        let n = self.points.len();
        if self.distance.len() != n || self.distance.iter().any(|r| r.len() != n) {
            return Err(CoreError::Structural("distance matrix must be points x points".into()));
        }
        for a in 0..n {
            if self.distance[a][a] != 0.0 {
                return Err(CoreError::Argument("distance must be zero on the diagonal".into()));
            }
            for b in 0..n {
                if self.distance[a][b] != self.distance[b][a] || !(self.distance[a][b] >= 0.0) {
                    return Err(CoreError::Argument("distance must be symmetric and nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn customers(&self) -> Vec<usize> {
        (0..self.points.len()).filter(|&p| p != self.depot).collect()
    }

    pub fn route_length(&self, route: &[usize]) -> f64 {
        if route.is_empty() {
            return 0.0;
        }
        let mut len = self.distance[self.depot][route[0]];
        for w in route.windows(2) {
            len += self.distance[w[0]][w[1]];
        }
        len + self.distance[route[route.len() - 1]][self.depot]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("vrp v1\n");
        let _ = writeln!(s, "vehicles {}", self.vehicles.join(" "));
        let (dx, dy) = self.points[self.depot];
        let _ = writeln!(s, "depot {dx} {dy}");
        for (i, &(x, y)) in self.points.iter().enumerate() {
            if i != self.depot {
                let _ = writeln!(s, "point {x} {y}");
            }
        }
        s
    }

    /// The depot is stored first; remaining points keep file order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_header("vrp v1")?;
        let vehicles: Vec<String> = lines.keyed("vehicles")?.1.iter().map(|s| s.to_string()).collect();
        let (ln, d) = lines.keyed("depot")?;
        let mut points = vec![(Lines::signed_at(ln, &d, 0)?, Lines::signed_at(ln, &d, 1)?)];
        while let Some((ln, p)) = lines.next_keyed("point")? {
            let pt = (Lines::signed_at(ln, &p, 0)?, Lines::signed_at(ln, &p, 1)?);
            if points.contains(&pt) {
                return Err(CoreError::Parse { line: ln, msg: "duplicate point".into() });
            }
            points.push(pt);
        }
        lines.expect_end()?;
        Self::new(points, 0, vehicles)
    }
}

/// Checks the routing constraints for one solution.
pub fn vrp_check(instance: &VrpInstance, step: usize, sol: &VrpSolution) -> Result<()> {
    let violation = |constraint: String| Err(CoreError::ConstraintViolation { step, constraint });
    if sol.routes.len() != instance.vehicles.len() {
        return violation("one route per vehicle".into());
    }
    let n = instance.points.len();
    let mut seen = vec![0usize; n];
    for (v, r) in sol.routes.iter().enumerate() {
        if r.is_empty() {
            return violation(format!("vehicle {} must leave the depot", instance.vehicles[v]));
        }
        for &p in r {
            if p >= n || p == instance.depot {
                return violation(format!("vehicle {} visits an invalid point {p}", instance.vehicles[v]));
            }
            seen[p] += 1;
        }
    }
    for p in instance.customers() {
        if seen[p] != 1 {
            return violation(format!("point {p} visited {} times", seen[p]));
        }
    }
    Ok(())
}

/// Distance travelled per vehicle.
pub fn vrp_route_lengths(instance: &VrpInstance, sol: &VrpSolution) -> Vec<f64> {
    sol.routes.iter().map(|r| instance.route_length(r)).collect()
}

/// Every labelled route set, by permuting the customers and cutting the
/// permutation into one non-empty segment per vehicle. Only for small inputs.
pub fn vrp_enumerate(instance: &VrpInstance) -> Result<Vec<VrpSolution>> {
    let customers = instance.customers();
    let k = instance.vehicles.len();
    if customers.len() > 9 {
        return Err(CoreError::Argument(format!(
            "route enumeration limited to 9 customers, got {}",
            customers.len()
        )));
    }
    if customers.len() < k {
        return Err(CoreError::Infeasible("fewer customers than vehicles".into()));
    }
    let mut out = Vec::new();
    let mut perm = customers.clone();
    permutations(&mut perm, 0, &mut |p| {
        cuts(p.len(), k, &mut |bounds| {
            let routes = bounds.windows(2).map(|w| p[w[0]..w[1]].to_vec()).collect();
            out.push(VrpSolution { routes });
        });
    });
    Ok(out)
}

fn permutations(items: &mut Vec<usize>, start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        f(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permutations(items, start + 1, f);
        items.swap(start, i);
    }
}

/// All ways to split `0..n` into `k` non-empty consecutive ranges; yields the
/// `k + 1` boundaries.
fn cuts(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(n: usize, k: usize, b: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        let placed = b.len() - 1;
        if placed == k - 1 {
            b.push(n);
            f(b);
            b.pop();
            return;
        }
        let last = *b.last().unwrap();
        let remaining = k - 1 - placed;
        for c in last + 1..=n - remaining {
            b.push(c);
            rec(n, k, b, f);
            b.pop();
        }
    }
    let mut b = vec![0];
    rec(n, k, &mut b, f);
}

/// Routing program over one or more steps plus the data needed to read
/// solutions back.
pub struct VrpIp {
    pub model: LinearModel,
    /// `arcs[k]` lists `(a, b, v, var)` for step k.
    pub arcs: Vec<Vec<(usize, usize, usize, VarId)>>,
    pub fairness_vars: Vec<VarId>,
    instances: Vec<VrpInstance>,
}

impl VrpIp {
    pub fn separator(&self) -> VrpSeparator {
        VrpSeparator {
            points: self.instances.iter().map(|i| i.points.len()).collect(),
            depots: self.instances.iter().map(|i| i.depot).collect(),
            arcs: self.arcs.clone(),
        }
    }

    /// Reads tours out of an integral assignment.
    pub fn decode(&self, x: &[f64]) -> Result<Vec<VrpSolution>> {
        self.instances
            .iter()
            .zip(&self.arcs)
            .map(|(inst, arcs)| {
                let nv = inst.vehicles.len();
                let n = inst.points.len();
                let mut next = vec![vec![None; n]; nv];
                for &(a, b, v, var) in arcs {
                    if x[var.0] > 0.5 {
                        next[v][a] = Some(b);
                    }
                }
                let routes = (0..nv)
                    .map(|v| {
                        let mut route = Vec::new();
                        let mut cur = next[v][inst.depot];
                        while let Some(p) = cur {
                            if p == inst.depot {
                                return Ok(route);
                            }
                            if route.len() > n {
                                break;
                            }
                            route.push(p);
                            cur = next[v][p];
                        }
                        Err(CoreError::Solver(tempfair_milp::MilpError::Numerical(format!(
                            "vehicle {v} does not return to the depot"
                        ))))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let sol = VrpSolution { routes };
                vrp_check(inst, 0, &sol).map_err(|e| {
                    CoreError::Solver(tempfair_milp::MilpError::Numerical(format!("decoded tours invalid: {e}")))
                })?;
                Ok(sol)
            })
            .collect()
    }
}

/// Builds the routing program (without the subtour family, which the
/// separator adds lazily). Step `k` uses `instances[k]`; distances enter the
/// quality and vehicle utilities with weight `obj.step_weights[k]`.
pub fn vrp_build_ip(instances: &[VrpInstance], obj: &IpObjective) -> Result<VrpIp> {
    let first = instances
        .first()
        .ok_or_else(|| CoreError::Argument("no routing instance given".into()))?;
    let nv = first.vehicles.len();
    if instances.iter().any(|i| i.vehicles.len() != nv) {
        return Err(CoreError::Structural("vehicle count differs between steps".into()));
    }
    obj.validate(instances.len(), nv)?;
    let mut m = LinearModel::new(ObjSense::Minimize);
    let mut all_arcs = Vec::new();
    let mut utility: Vec<LinExpr> = vec![LinExpr::new(); nv];
    for (k, inst) in instances.iter().enumerate() {
        inst.validate()?;
        let n = inst.points.len();
        if n < nv + 1 {
            return Err(CoreError::Infeasible(format!(
                "step {k}: {} non-depot points for {nv} vehicles",
                n - 1
            )));
        }
        let w = obj.step_weights[k];
        let mut arcs = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                for v in 0..nv {
                    let var = m.add_binary(format!("x_{k}_{a}_{b}_{v}"));
                    let d = inst.distance[a][b];
                    if d != 0.0 {
                        m.add_objective_term(var, w * d);
                        utility[v].add_term(var, w * d);
                    }
                    arcs.push((a, b, v, var));
                }
            }
        }
        let idx = |a: usize, b: usize, v: usize| -> VarId {
            // Arcs are laid out a-major, then b (skipping a), then v.
            let bb = if b > a { b - 1 } else { b };
            arcs[(a * (n - 1) + bb) * nv + v].3
        };
        for b in 0..n {
            for v in 0..nv {
                let mut coeffs = Vec::new();
                for a in 0..n {
                    if a != b {
                        coeffs.push((idx(a, b, v), 1.0));
                        coeffs.push((idx(b, a, v), -1.0));
                    }
                }
                m.add_constraint(format!("flow_{k}_{b}_{v}"), coeffs, Cmp::Eq, 0.0);
            }
        }
        for b in 0..n {
            if b == inst.depot {
                continue;
            }
            let coeffs = (0..n)
                .filter(|&a| a != b)
                .flat_map(|a| (0..nv).map(move |v| (a, v)))
                .map(|(a, v)| (idx(a, b, v), 1.0))
                .collect();
            m.add_constraint(format!("visit_{k}_{b}"), coeffs, Cmp::Eq, 1.0);
        }
        for v in 0..nv {
            let coeffs = (0..n)
                .filter(|&a| a != inst.depot)
                .map(|a| (idx(inst.depot, a, v), 1.0))
                .collect();
            m.add_constraint(format!("depart_{k}_{v}"), coeffs, Cmp::Eq, 1.0);
        }
        all_arcs.push(arcs);
    }
    let fairness_vars = obj.add_fairness(&mut m, &utility)?;
    if obj.symmetry_breaking && obj.uniform_offsets() {
        // Vehicles are interchangeable: keep only the labelling with
        // nondecreasing utility.
        for v in 0..nv - 1 {
            let mut e = utility[v].clone();
            for &(var, c) in &utility[v + 1].terms {
                e.add_term(var, -c);
            }
            m.add_expr_constraint(format!("order_{v}"), &e, Cmp::Le, 0.0);
        }
    }
    Ok(VrpIp {
        model: m,
        arcs: all_arcs,
        fairness_vars,
        instances: instances.to_vec(),
    })
}

/// Emits `sum_{a in S, b not in S, v} x_{a,b,v} >= 1` for every connected
/// component S of the arc support that does not contain the depot.
pub struct VrpSeparator {
    points: Vec<usize>,
    depots: Vec<usize>,
    arcs: Vec<Vec<(usize, usize, usize, VarId)>>,
}

impl VrpSeparator {
    fn components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let nx = p[c];
                p[c] = r;
                c = nx;
            }
            r
        }
        for (a, b) in edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        (0..n).map(|x| find(&mut parent, x)).collect()
    }
}

impl Separator for VrpSeparator {
    fn separate(&mut self, x: &[f64], integral: bool) -> Vec<Constraint> {
        let threshold = if integral { 0.5 } else { 1e-9 };
        let mut cuts = Vec::new();
        for (k, arcs) in self.arcs.iter().enumerate() {
            let n = self.points[k];
            let depot = self.depots[k];
            let comp = Self::components(
                n,
                arcs.iter().filter(|t| x[t.3 .0] > threshold).map(|t| (t.0, t.1)),
            );
            let root = comp[depot];
            let mut labels: Vec<usize> = comp.iter().copied().filter(|&c| c != root).collect();
            labels.sort_unstable();
            labels.dedup();
            for label in labels {
                let inside: Vec<bool> = comp.iter().map(|&c| c == label).collect();
                let coeffs: Vec<(VarId, f64)> = arcs
                    .iter()
                    .filter(|t| inside[t.0] && !inside[t.1])
                    .map(|t| (t.3, 1.0))
                    .collect();
                let members: Vec<String> = (0..n).filter(|&p| inside[p]).map(|p| p.to_string()).collect();
                cuts.push(Constraint {
                    name: format!("subtour_{k}_{}", members.join("_")),
                    coeffs,
                    cmp: Cmp::Ge,
                    rhs: 1.0,
                });
            }
        }
        cuts
    }
}
