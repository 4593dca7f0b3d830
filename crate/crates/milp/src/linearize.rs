use crate::model::{Cmp, LinExpr, LinearModel, VarId};

/// Variables introduced by [`linearize_gap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapVars {
    pub max: VarId,
    pub min: VarId,
}

fn entity_rows(model: &mut LinearModel, bound: VarId, utilities: &[LinExpr], offsets: &[f64], cmp: Cmp, tag: &str) {
    assert_eq!(utilities.len(), offsets.len(), "one offset per utility expression");
    for (e, (u, &off)) in utilities.iter().zip(offsets).enumerate() {
        // bound - U_e  cmp  offset_e + const(U_e)
        let mut expr = LinExpr::new().with_term(bound, 1.0);
        for &(v, c) in &u.terms {
            expr.add_term(v, -c);
        }
        model.add_expr_constraint(format!("{tag}_{e}"), &expr, cmp, off + u.constant);
    }
}

/// Adds a continuous `M` with `M >= offset_e + U_e` for every entity and
/// returns it. Minimising `M` makes it equal to the largest offset utility.
pub fn linearize_minimax(model: &mut LinearModel, utilities: &[LinExpr], offsets: &[f64]) -> VarId {
    let m = model.add_continuous("fair_max", f64::NEG_INFINITY, f64::INFINITY);
    entity_rows(model, m, utilities, offsets, Cmp::Ge, "fair_max");
    m
}

/// Adds `M >= offset_e + U_e` and `m <= offset_e + U_e` (with `m >= 0`).
/// Minimising `M - m` makes it equal to the max-min gap.
pub fn linearize_gap(model: &mut LinearModel, utilities: &[LinExpr], offsets: &[f64]) -> GapVars {
    let max = model.add_continuous("fair_max", f64::NEG_INFINITY, f64::INFINITY);
    let min = model.add_continuous("fair_min", 0.0, f64::INFINITY);
    entity_rows(model, max, utilities, offsets, Cmp::Ge, "fair_max");
    entity_rows(model, min, utilities, offsets, Cmp::Le, "fair_min");
    GapVars { max, min }
}
