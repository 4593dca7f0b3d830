//! Fairness metrics over per-entity utility vectors, in plain and
//! (discounted) temporal form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Per-entity utilities (loads, distances, costs, preference points) for one
/// solution at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityVector {
    pub entities: Vec<String>,
    pub values: Vec<f64>,
}

impl UtilityVector {
    pub fn new(entities: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if entities.is_empty() {
            return Err(CoreError::Argument("utility vector needs at least one entity".into()));
        }
        if entities.len() != values.len() {
            return Err(CoreError::Structural(format!(
                "{} entities but {} values",
                entities.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(CoreError::Argument(format!("utility {v} is not a finite nonnegative real")));
        }
        Ok(Self { entities, values })
    }

    /// Entities named `prefix1..prefixN`.
    pub fn named(prefix: &str, values: &[f64]) -> Result<Self> {
        Self::new(entity_names(prefix, values.len()), values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_same_entities(&self, other: &UtilityVector) -> Result<()> {
        if self.entities != other.entities {
            return Err(CoreError::Structural(format!(
                "entity lists differ: {:?} vs {:?}",
                self.entities, other.entities
            )));
        }
        Ok(())
    }
}

pub fn entity_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Past utility vectors, oldest first; the last entry is step t-1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub steps: Vec<UtilityVector>,
}

impl History {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(steps: Vec<UtilityVector>) -> Result<Self> {
        if let Some(first) = steps.first() {
            for s in &steps[1..] {
                first.check_same_entities(s)?;
            }
        }
        Ok(Self { steps })
    }

    /// Builds a history from one value vector per step, oldest first.
    pub fn from_steps(entities: Vec<String>, steps: &[Vec<f64>]) -> Result<Self> {
        let steps = steps
            .iter()
            .map(|v| UtilityVector::new(entities.clone(), v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(steps)
    }

    /// Builds a history from one series per entity (`series[i][k]` is entity
    /// i at step k).
    pub fn from_series(entities: Vec<String>, series: &[Vec<f64>]) -> Result<Self> {
        if entities.len() != series.len() {
            return Err(CoreError::Structural("one series per entity required".into()));
        }
        let len = series.first().map_or(0, Vec::len);
        if series.iter().any(|s| s.len() != len) {
            return Err(CoreError::Structural("series lengths differ".into()));
        }
        let steps = (0..len)
            .map(|k| UtilityVector::new(entities.clone(), series.iter().map(|s| s[k]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, u: UtilityVector) -> Result<()> {
        if let Some(first) = self.steps.first() {
            first.check_same_entities(&u)?;
        }
        self.steps.push(u);
        Ok(())
    }

    /// The most recent `window` steps (all of them when `None`).
    pub fn window(&self, window: Option<usize>) -> History {
        match window {
            Some(w) if w < self.steps.len() => History {
                steps: self.steps[self.steps.len() - w..].to_vec(),
            },
            _ => self.clone(),
        }
    }

    pub fn reversed(&self) -> History {
        let mut steps = self.steps.clone();
        steps.reverse();
        History { steps }
    }

    /// Element-wise sum of all steps (None when empty).
    pub fn cumulative(&self) -> Option<Vec<f64>> {
        let first = self.steps.first()?;
        let mut acc = vec![0.0; first.len()];
        for s in &self.steps {
            for (a, v) in acc.iter_mut().zip(&s.values) {
                *a += v;
            }
        }
        Some(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    pub gamma: f64,
    pub tau: f64,
}

impl DiscountSpec {
    pub const UNDISCOUNTED: DiscountSpec = DiscountSpec { gamma: 1.0, tau: 1.0 };

    pub fn new(gamma: f64, tau: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("tau", tau)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::Argument(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self { gamma, tau })
    }
}

impl Default for DiscountSpec {
    fn default() -> Self {
        Self::UNDISCOUNTED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    HigherIsFairer,
    LowerIsFairer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    RelativeMaxMin,
    QuadraticMaxMinGap,
    MaximinRatio,
    MaxMinGap,
    MinimaxCost,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::RelativeMaxMin,
        MetricKind::QuadraticMaxMinGap,
        MetricKind::MaximinRatio,
        MetricKind::MaxMinGap,
        MetricKind::MinimaxCost,
    ];

    pub fn orientation(self) -> Orientation {
        match self {
            MetricKind::RelativeMaxMin | MetricKind::QuadraticMaxMinGap | MetricKind::MaximinRatio => {
                Orientation::HigherIsFairer
            }
            MetricKind::MaxMinGap | MetricKind::MinimaxCost => Orientation::LowerIsFairer,
        }
    }

    /// Native metric value of a raw utility slice.
    pub fn eval(self, values: &[f64]) -> f64 {
        match self {
            MetricKind::RelativeMaxMin => rmm_values(values),
            MetricKind::QuadraticMaxMinGap => qmmg_values(values),
            MetricKind::MaximinRatio => maximin_ratio_values(values),
            MetricKind::MaxMinGap => gap_values(values),
            MetricKind::MinimaxCost => max_of(values),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            MetricKind::RelativeMaxMin => "rmm",
            MetricKind::QuadraticMaxMinGap => "qmmg",
            MetricKind::MaximinRatio => "mm",
            MetricKind::MaxMinGap => "gap",
            MetricKind::MinimaxCost => "minimax",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MetricKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| CoreError::Argument(format!("unknown metric '{s}' (rmm, qmmg, mm, gap, minimax)")))
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn gap_values(v: &[f64]) -> f64 {
    max_of(v) - min_of(v)
}

pub(crate) fn rmm_values(v: &[f64]) -> f64 {
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return 1.0;
    }
    1.0 - gap_values(v) / total
}

pub(crate) fn qmmg_values(v: &[f64]) -> f64 {
    let half = gap_values(v) / 2.0;
    -(half * half)
}

pub(crate) fn maximin_ratio_values(v: &[f64]) -> f64 {
    let max = max_of(v);
    if max == 0.0 {
        return 1.0;
    }
    min_of(v) / max
}

/// `sum_{d=1..T_H} gamma^d * H[t-d]` per entity.
pub fn discounted_history(history: &History, gamma: f64) -> Option<Vec<f64>> {
    let first = history.steps.first()?;
    let mut acc = vec![0.0; first.len()];
    let mut w = 1.0;
    for step in history.steps.iter().rev() {
        w *= gamma;
        for (a, v) in acc.iter_mut().zip(&step.values) {
            *a += w * v;
        }
    }
    Some(acc)
}

/// Per-entity discounted total over history and planned steps: the last
/// history step weighs `gamma`, the first planned step weighs 1.
pub fn discounted_totals(history: &History, plan: &[UtilityVector], disc: DiscountSpec) -> Result<UtilityVector> {
    let first = plan
        .first()
        .ok_or_else(|| CoreError::Argument("plan must contain at least one step".into()))?;
    for p in &plan[1..] {
        first.check_same_entities(p)?;
    }
    if let Some(h) = history.steps.first() {
        first.check_same_entities(h)?;
    }
    let mut acc = discounted_history(history, disc.gamma).unwrap_or_else(|| vec![0.0; first.len()]);
    let mut w = 1.0;
    for p in plan {
        for (a, v) in acc.iter_mut().zip(&p.values) {
            *a += w * v;
        }
        w *= disc.tau;
    }
    Ok(UtilityVector {
        entities: first.entities.clone(),
        values: acc,
    })
}

/// Relative max-min: `1 - (max - min) / total`, 1 for an all-zero vector.
pub fn rmm(u: &UtilityVector) -> f64 {
    rmm_values(&u.values)
}

/// Quadratic max-min gap: `-((max - min) / 2)^2`.
pub fn qmmg(u: &UtilityVector) -> f64 {
    qmmg_values(&u.values)
}

/// Maximin ratio `min / max`, 1 for an all-zero vector.
pub fn maximin_ratio(u: &UtilityVector) -> f64 {
    maximin_ratio_values(&u.values)
}

pub fn max_min_gap(u: &UtilityVector) -> f64 {
    gap_values(&u.values)
}

pub fn minimax_cost(u: &UtilityVector) -> f64 {
    max_of(&u.values)
}

/// Any metric applied to the discounted totals of `(history, plan)`.
pub fn temporal(metric: MetricKind, history: &History, plan: &[UtilityVector], disc: DiscountSpec) -> Result<f64> {
    Ok(metric.eval(&discounted_totals(history, plan, disc)?.values))
}

pub fn rmm_temporal(history: &History, plan: &[UtilityVector], disc: DiscountSpec) -> Result<f64> {
    temporal(MetricKind::RelativeMaxMin, history, plan, disc)
}

pub fn qmmg_temporal(history: &History, plan: &[UtilityVector], disc: DiscountSpec) -> Result<f64> {
    temporal(MetricKind::QuadraticMaxMinGap, history, plan, disc)
}

pub fn maximin_ratio_temporal(history: &History, plan: &[UtilityVector], disc: DiscountSpec) -> Result<f64> {
    temporal(MetricKind::MaximinRatio, history, plan, disc)
}

/// Temporal fairness of the realized history itself, as seen at its last
/// step (that step weighs 1, earlier ones `gamma^d`).
pub fn history_fairness(metric: MetricKind, history: &History, gamma: f64) -> Result<f64> {
    let (last, rest) = history
        .steps
        .split_last()
        .ok_or_else(|| CoreError::Argument("history is empty".into()))?;
    let past = History { steps: rest.to_vec() };
    temporal(metric, &past, std::slice::from_ref(last), DiscountSpec { gamma, tau: 1.0 })
}

/// Closed-form F^rmm trajectory when every step from t on is perfectly
/// balanced with `per_step_total` spread evenly. Element `x` is the
/// discounted relative max-min seen at step t+x.
pub fn rmm_balanced_trajectory(history: &History, per_step_total: f64, gamma: f64, n_steps: usize) -> Result<Vec<f64>> {
    if !(per_step_total > 0.0) {
        return Err(CoreError::Argument("per-step total must be positive".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(CoreError::Argument(format!("gamma = {gamma} outside [0, 1]")));
    }
    let disc_hist = discounted_history(history, gamma);
    let (gap, hist_total) = match &disc_hist {
        Some(h) => (gap_values(h), h.iter().sum::<f64>()),
        None => (0.0, 0.0),
    };
    Ok((0..n_steps)
        .map(|x| {
            let gx = gamma.powi(x as i32);
            let future = if gamma == 1.0 {
                per_step_total * (x as f64 + 1.0)
            } else {
                per_step_total * (1.0 - gamma.powi(x as i32 + 1)) / (1.0 - gamma)
            };
            let total = gx * hist_total + future;
            1.0 - gap * gx / total
        })
        .collect())
}
