//! Small self-contained mixed-integer programming core: a bounded revised
//! simplex, best-bound branch-and-bound with lazy constraint callbacks, and
//! the max/min linearizations used by the fairness objectives.

mod bnb;
mod error;
mod linearize;
mod lp_format;
mod model;
mod simplex;

pub use bnb::{
    branch_and_bound, branch_and_bound_with, simplex_solve, BnbOptions, Separator, SolveResult, SolveStatus,
    FEAS_TOL,
};
pub use error::MilpError;
pub use linearize::{linearize_gap, linearize_minimax, GapVars};
pub use lp_format::to_lp_string;
pub use model::{Cmp, Constraint, LinExpr, LinearModel, ObjSense, VarId, Variable};
