//! Temporal fairness for repeated combinatorial decisions.
//!
//! Fairness metrics over per-entity utilities and their historical,
//! discounted and multi-step variants ([`fairness`]), the formulation ladder
//! ([`objective`]), four problem domains ([`domains`]), instance and history
//! generators ([`instance_gen`]), an append-only run log ([`history_store`])
//! and the experiment drivers behind the command-line tool ([`experiments`]).

pub mod domains;
pub mod error;
pub mod experiments;
pub mod fairness;
pub mod history_store;
pub mod instance_gen;
pub mod objective;

pub use domains::{DomainInstance, IpObjective, Solution};
pub use error::{CoreError, Result};
pub use fairness::{DiscountSpec, History, MetricKind, Orientation, UtilityVector};
pub use objective::{
    canonical_fairness, rolling_run, score, solve, Diagnostics, FormulationKind, FormulationSpec, ScoredPlan,
    SolverChoice,
};
