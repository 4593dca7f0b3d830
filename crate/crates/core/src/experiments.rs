//! Experiment drivers: each reproducible experiment returns typed rows and
//! renders them as CSV tables. Reproduce outputs contain no timings, so the
//! same seed and configuration always give byte-identical files; wall-clock
//! measurements live in [`bench`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::domains::{
    cap_enumerate, CapInstance, CapSolution, DomainInstance, NspInstance, Solution,
    VrpInstance,
};
use crate::domains::nsp::SHIFTS;
use crate::error::{CoreError, Result};
use crate::fairness::{
    entity_names, rmm_balanced_trajectory, temporal, DiscountSpec, History, MetricKind, UtilityVector,
};
use crate::instance_gen::{gen_nsp_histories, gen_tap_run, gen_vrp, gen_vrp_history, TapRun};
use crate::objective::{
    canonical_fairness, rolling_run, score, solve, FormulationKind, FormulationSpec, ScoredPlan, SolverChoice,
};

// ---------------------------------------------------------------- tables

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// RFC 4180 text; fields holding commas or quotes are quoted.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
    }
}

/// Shortest round-trip decimal; negative zero prints as `0`.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

fn nums(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

// ---------------------------------------------------------------- ids and config

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    CompareFFh,
    FopVsHfop,
    GammaSweep,
    BetaSweep,
    Forecast,
    Vrp,
    Tap,
    Nsp,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::CompareFFh,
        ExperimentId::FopVsHfop,
        ExperimentId::GammaSweep,
        ExperimentId::BetaSweep,
        ExperimentId::Forecast,
        ExperimentId::Vrp,
        ExperimentId::Tap,
        ExperimentId::Nsp,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ExperimentId::CompareFFh => "compare-F-FH",
            ExperimentId::FopVsHfop => "fop-vs-hfop",
            ExperimentId::GammaSweep => "gamma-sweep",
            ExperimentId::BetaSweep => "beta-sweep",
            ExperimentId::Forecast => "forecast",
            ExperimentId::Vrp => "vrp",
            ExperimentId::Tap => "tap",
            ExperimentId::Nsp => "nsp",
        }
    }

    /// Whether [`bench`] supports this id.
    pub fn benchable(self) -> bool {
        matches!(self, ExperimentId::Vrp | ExperimentId::Tap)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ExperimentId {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL.into_iter().find(|e| e.tag() == s).ok_or_else(|| {
            let ids: Vec<&str> = ExperimentId::ALL.iter().map(|e| e.tag()).collect();
            CoreError::Argument(format!("unknown experiment '{s}' (one of {})", ids.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tap_runs: usize,
    /// Branch-and-bound node limit for the multi-step task-assignment solve.
    pub tap_node_limit: Option<usize>,
    /// Worker threads for the task-assignment runs.
    pub threads: usize,
    pub vrp_history_steps: usize,
}

pub const VRP_GRID: usize = 11;
pub const VRP_POINTS: usize = 12;
pub const VRP_VEHICLES: usize = 4;
pub const VRP_BETA: f64 = 10.0;
pub const TAP_BETA: f64 = 10.0;
pub const TAP_DISCOUNT: f64 = 0.75;
pub const NSP_BETA: f64 = 2.0;
pub const NSP_GAMMA: f64 = 0.65;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            tap_runs: 10,
            tap_node_limit: Some(200),
            threads: 1,
            vrp_history_steps: 5,
        }
    }
}

/// Runs one experiment and renders its CSV tables.
pub fn reproduce(id: ExperimentId, cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    match id {
        ExperimentId::CompareFFh => compare_tables(),
        ExperimentId::FopVsHfop => Ok(vec![fop_vs_hfop_table(&fop_vs_hfop(FOP_VS_HFOP_STEPS)?)]),
        ExperimentId::GammaSweep => {
            let sweep = gamma_sweep(&GAMMAS, GAMMA_SWEEP_STEPS)?;
            Ok(gamma_tables(&sweep))
        }
        ExperimentId::BetaSweep => Ok(beta_tables(&beta_sweep()?)),
        ExperimentId::Forecast => Ok(vec![forecast_table(&forecast()?)]),
        ExperimentId::Vrp => Ok(vrp_tables(&vrp(cfg)?)),
        ExperimentId::Tap => Ok(tap_tables(&tap(cfg)?)),
        ExperimentId::Nsp => nsp_tables(&nsp()?),
    }
}

// ---------------------------------------------------------------- CAP fixtures

/// Loads of two lecturers over four past semesters.
pub fn running_history() -> History {
    History::from_series(entity_names("l", 2), &[vec![2.0, 1.5, 3.0, 2.0], vec![1.0, 1.5, 0.0, 1.0]])
        .expect("fixture history is valid")
}

/// Two lecturers, three courses each step, no quality differences.
pub fn running_cap(steps: usize) -> CapInstance {
    CapInstance::uniform(entity_names("l", 2), entity_names("c", 3), vec![vec![0.0; 3]; 2], 1.0, steps)
        .expect("fixture instance is valid")
}

/// Three lecturers of skill 2, 1.5 and 0 on two courses.
pub fn beta_sweep_cap(steps: usize) -> CapInstance {
    CapInstance::uniform(
        entity_names("l", 3),
        entity_names("c", 2),
        vec![vec![2.0; 2], vec![1.5; 2], vec![0.0; 2]],
        4.0,
        steps,
    )
    .expect("fixture instance is valid")
}

/// Two lecturers of skill 2 and 1 on two courses over four semesters; the
/// first is on sabbatical in the last two.
pub fn forecast_cap() -> CapInstance {
    CapInstance::new(
        entity_names("l", 2),
        entity_names("c", 2),
        vec![vec![2.0; 2], vec![1.0; 2]],
        1.0,
        vec![vec![], vec![], vec![0], vec![0]],
    )
    .expect("fixture instance is valid")
}

/// First solution (in enumeration order) of `step` whose per-lecturer loads
/// equal `loads`.
pub fn cap_with_loads(inst: &CapInstance, step: usize, loads: &[f64]) -> Result<CapSolution> {
    cap_enumerate(inst, step)?
        .into_iter()
        .find(|s| s.loads() == loads)
        .ok_or_else(|| CoreError::Argument(format!("no assignment with loads {loads:?} at step {step}")))
}

fn loads_label(loads: &[f64]) -> String {
    format!("x_({})", loads.iter().map(|v| num(*v)).collect::<Vec<_>>().join(","))
}

// ---------------------------------------------------------------- compare-F-FH

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub solution: String,
    pub loads: Vec<f64>,
    pub f: f64,
    pub f_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub plan: String,
    pub steps: Vec<Vec<f64>>,
    pub f_h_gamma_tau: f64,
}

pub const COMPARE_LOADS: [[f64; 2]; 3] = [[1.5, 1.5], [1.0, 2.0], [0.0, 3.0]];

/// Plain and historical relative max-min of three single-step assignments
/// under the running history.
pub fn compare_f_fh() -> Result<Vec<CompareRow>> {
    let inst = running_cap(1);
    let steps = DomainInstance::cap_steps(&inst);
    let hist = running_history();
    let fop = FormulationSpec::fop(1.0, MetricKind::RelativeMaxMin)?;
    let hfop = FormulationSpec::hfop(1.0, MetricKind::RelativeMaxMin)?;
    COMPARE_LOADS
        .iter()
        .map(|loads| {
            let plan = [Solution::Cap(cap_with_loads(&inst, 0, loads)?)];
            Ok(CompareRow {
                solution: loads_label(loads),
                loads: loads.to_vec(),
                f: score(&fop, &History::empty(), &plan, &steps)?.fairness_term,
                f_h: score(&hfop, &hist, &plan, &steps)?.fairness_term,
            })
        })
        .collect()
}

pub const PLANNED_LOADS: [[[f64; 2]; 2]; 3] = [
    [[0.0, 3.0], [0.0, 3.0]],
    [[0.5, 2.5], [0.0, 3.0]],
    [[1.5, 1.5], [0.0, 3.0]],
];

/// Two-step plans scored with the undiscounted multi-step metric.
pub fn planning_multiple_steps() -> Result<Vec<PlanRow>> {
    let inst = running_cap(2);
    let steps = DomainInstance::cap_steps(&inst);
    let hist = running_history();
    let spec = FormulationSpec::msdhfop(1.0, 1.0, 1.0, 2, MetricKind::RelativeMaxMin)?;
    PLANNED_LOADS
        .iter()
        .map(|plan_loads| {
            let plan = plan_loads
                .iter()
                .enumerate()
                .map(|(k, l)| Ok(Solution::Cap(cap_with_loads(&inst, k, l)?)))
                .collect::<Result<Vec<_>>>()?;
            let label = plan_loads.iter().map(|l| loads_label(l)).collect::<Vec<_>>().join(" ");
            Ok(PlanRow {
                plan: label,
                steps: plan_loads.iter().map(|l| l.to_vec()).collect(),
                f_h_gamma_tau: score(&spec, &hist, &plan, &steps)?.fairness_term,
            })
        })
        .collect()
}

fn compare_tables() -> Result<Vec<Table>> {
    let mut a = Table::new("compare-F-FH", &["solution", "l1", "l2", "F", "F_H"]);
    for r in compare_f_fh()? {
        a.push(vec![r.solution, num(r.loads[0]), num(r.loads[1]), num(r.f), num(r.f_h)]);
    }
    let mut b = Table::new("compare-F-FH_planning", &["plan", "step1_l1", "step1_l2", "step2_l1", "step2_l2", "F_H_gamma_tau"]);
    for r in planning_multiple_steps()? {
        b.push(vec![
            r.plan,
            num(r.steps[0][0]),
            num(r.steps[0][1]),
            num(r.steps[1][0]),
            num(r.steps[1][1]),
            num(r.f_h_gamma_tau),
        ]);
    }
    Ok(vec![a, b])
}

// ---------------------------------------------------------------- fop-vs-hfop

pub const FOP_VS_HFOP_STEPS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub series: FormulationKind,
    pub loads: Vec<f64>,
    /// Undiscounted historical fairness including this step.
    pub f_h: f64,
    /// `1 - 5 / (3 * step + 15)`, the value under balanced loads.
    pub balanced_closed_form: f64,
}

fn committed_trajectory(
    runs: &[ScoredPlan],
    initial: &History,
    metric: MetricKind,
    gamma: f64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut hist = initial.clone();
    let mut out = Vec::with_capacity(runs.len());
    for r in runs {
        let u = r.per_step_utilities[0].clone();
        let f = temporal(metric, &hist, std::slice::from_ref(&u), DiscountSpec { gamma, tau: 1.0 })?;
        out.push((u.values.clone(), f));
        hist.push(u)?;
    }
    Ok(out)
}

/// FOP and HFOP run for `steps` semesters on the running example.
pub fn fop_vs_hfop(steps: usize) -> Result<Vec<TrajectoryRow>> {
    let inst = DomainInstance::cap_steps(&running_cap(steps));
    let hist = running_history();
    let metric = MetricKind::RelativeMaxMin;
    let mut rows = Vec::with_capacity(2 * steps);
    for spec in [FormulationSpec::fop(1.0, metric)?, FormulationSpec::hfop(1.0, metric)?] {
        let runs = rolling_run(&spec, &hist, &inst, &SolverChoice::Enumeration)?;
        for (step, (loads, f_h)) in committed_trajectory(&runs, &hist, metric, 1.0)?.into_iter().enumerate() {
            rows.push(TrajectoryRow {
                step,
                series: spec.kind,
                loads,
                f_h,
                balanced_closed_form: 1.0 - 5.0 / (3.0 * step as f64 + 15.0),
            });
        }
    }
    Ok(rows)
}

fn fop_vs_hfop_table(rows: &[TrajectoryRow]) -> Table {
    let mut t = Table::new("fop-vs-hfop", &["step", "series", "l1", "l2", "F_H", "balanced_closed_form"]);
    for r in rows {
        t.push(vec![
            r.step.to_string(),
            r.series.tag().into(),
            num(r.loads[0]),
            num(r.loads[1]),
            num(r.f_h),
            num(r.balanced_closed_form),
        ]);
    }
    t
}

// ---------------------------------------------------------------- gamma-sweep

pub const GAMMAS: [f64; 3] = [0.25, 0.5, 0.9];
pub const GAMMA_SWEEP_STEPS: usize = 151;
pub const GAMMA_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct GammaTrajectory {
    pub gamma: f64,
    /// Closed-form discounted fairness at steps t, t+1, ... under balanced loads.
    pub closed_form: Vec<f64>,
    /// The same quantity measured on FOP's committed solutions.
    pub simulated: Vec<f64>,
    /// First step offset whose value reaches [`GAMMA_THRESHOLD`].
    pub first_reach: Option<usize>,
}

pub fn gamma_sweep(gammas: &[f64], steps: usize) -> Result<Vec<GammaTrajectory>> {
    let hist = running_history();
    let inst = DomainInstance::cap_steps(&running_cap(steps));
    let metric = MetricKind::RelativeMaxMin;
    let runs = rolling_run(&FormulationSpec::fop(1.0, metric)?, &hist, &inst, &SolverChoice::Enumeration)?;
    gammas
        .iter()
        .map(|&gamma| {
            let closed_form = rmm_balanced_trajectory(&hist, 3.0, gamma, steps)?;
            let simulated = committed_trajectory(&runs, &hist, metric, gamma)?
                .into_iter()
                .map(|(_, f)| f)
                .collect();
            let first_reach = closed_form.iter().position(|&v| v >= GAMMA_THRESHOLD);
            Ok(GammaTrajectory {
                gamma,
                closed_form,
                simulated,
                first_reach,
            })
        })
        .collect()
}

fn gamma_tables(sweep: &[GammaTrajectory]) -> Vec<Table> {
    let mut t = Table::new("gamma-sweep", &["step", "gamma", "closed_form", "simulated"]);
    for g in sweep {
        for (x, (c, s)) in g.closed_form.iter().zip(&g.simulated).enumerate() {
            t.push(vec![x.to_string(), num(g.gamma), num(*c), num(*s)]);
        }
    }
    let mut s = Table::new("gamma-sweep_summary", &["gamma", "first_step_ge_0.99"]);
    for g in sweep {
        s.push(vec![num(g.gamma), g.first_reach.map_or("never".into(), |x| x.to_string())]);
    }
    vec![t, s]
}

// ---------------------------------------------------------------- beta-sweep

pub const BETAS: [f64; 4] = [0.125, 0.25, 0.75, 2.0];
pub const BETA_SWEEP_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BetaStep {
    pub loads: Vec<f64>,
    pub q: f64,
    /// Canonical fairness of this step alone.
    pub f: f64,
    /// Canonical fairness of the history including this step.
    pub f_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaRun {
    pub series: String,
    pub kind: FormulationKind,
    pub beta: f64,
    pub steps: Vec<BetaStep>,
}

impl BetaRun {
    pub fn mean_q(&self) -> f64 {
        mean(&self.steps.iter().map(|s| s.q).collect::<Vec<_>>())
    }

    pub fn mean_f(&self) -> f64 {
        mean(&self.steps.iter().map(|s| s.f).collect::<Vec<_>>())
    }
}

/// HFOP with each beta in [`BETAS`] plus OP, ten semesters from an empty
/// history, quadratic max-min gap.
pub fn beta_sweep() -> Result<Vec<BetaRun>> {
    let metric = MetricKind::QuadraticMaxMinGap;
    let inst = DomainInstance::cap_steps(&beta_sweep_cap(BETA_SWEEP_STEPS));
    let mut specs: Vec<(String, FormulationSpec)> = BETAS
        .iter()
        .map(|&b| Ok((format!("hfop_beta_{}", num(b)), FormulationSpec::hfop(b, metric)?)))
        .collect::<Result<_>>()?;
    specs.push(("op".into(), FormulationSpec::op(metric)));
    specs
        .into_iter()
        .map(|(series, spec)| {
            let runs = rolling_run(&spec, &History::empty(), &inst, &SolverChoice::Enumeration)?;
            let traj = committed_trajectory(&runs, &History::empty(), metric, 1.0)?;
            let steps = runs
                .iter()
                .zip(traj)
                .map(|(r, (loads, f_h))| BetaStep {
                    q: r.quality_term,
                    f: canonical_fairness(metric, metric.eval(&loads)),
                    f_h: canonical_fairness(metric, f_h),
                    loads,
                })
                .collect();
            Ok(BetaRun {
                series,
                kind: spec.kind,
                beta: spec.beta,
                steps,
            })
        })
        .collect()
}

fn beta_tables(runs: &[BetaRun]) -> Vec<Table> {
    let mut t = Table::new("beta-sweep", &["step", "series", "beta", "loads", "Q", "F", "F_H"]);
    for r in runs {
        for (k, s) in r.steps.iter().enumerate() {
            t.push(vec![
                k.to_string(),
                r.series.clone(),
                num(r.beta),
                nums(&s.loads),
                num(s.q),
                num(s.f),
                num(s.f_h),
            ]);
        }
    }
    let mut s = Table::new(
        "beta-sweep_summary",
        &["series", "beta", "quantity", "max", "min", "mean", "std"],
    );
    for r in runs {
        for (name, vals) in [
            ("Q", r.steps.iter().map(|s| s.q).collect::<Vec<_>>()),
            ("F", r.steps.iter().map(|s| s.f).collect()),
            ("F_H", r.steps.iter().map(|s| s.f_h).collect()),
        ] {
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            s.push(vec![
                r.series.clone(),
                num(r.beta),
                name.into(),
                num(max),
                num(min),
                num(mean(&vals)),
                num(std_dev(&vals)),
            ]);
        }
    }
    vec![t, s]
}

// ---------------------------------------------------------------- forecast

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub kind: FormulationKind,
    pub loads: Vec<Vec<f64>>,
    pub q_sum: f64,
    /// Maximin ratio of the lecturers' total loads over the four semesters.
    pub f: f64,
}

pub const FORECAST_BETA: f64 = 2.0;

/// HFOP re-solved each semester against a four-semester MSDHFOP plan.
pub fn forecast() -> Result<Vec<ForecastRow>> {
    let metric = MetricKind::MaximinRatio;
    let cap = forecast_cap();
    let inst = DomainInstance::cap_steps(&cap);
    let n = inst.len();
    let hfop = FormulationSpec::hfop(FORECAST_BETA, metric)?;
    let rolled = rolling_run(&hfop, &History::empty(), &inst, &SolverChoice::Enumeration)?;
    let hfop_loads: Vec<Vec<f64>> = rolled.iter().map(|r| r.per_step_utilities[0].values.clone()).collect();
    let hfop_q = rolled.iter().map(|r| r.quality_term).sum();
    let ms = FormulationSpec::msdhfop(FORECAST_BETA, 1.0, 1.0, n, metric)?;
    let plan = solve(&ms, &History::empty(), &inst, &SolverChoice::Enumeration)?;
    let ms_loads: Vec<Vec<f64>> = plan.per_step_utilities.iter().map(|u| u.values.clone()).collect();
    let row = |kind, loads: Vec<Vec<f64>>, q_sum| -> Result<ForecastRow> {
        let steps = loads
            .iter()
            .map(|l| UtilityVector::new(cap.lecturers.clone(), l.clone()))
            .collect::<Result<Vec<_>>>()?;
        let f = temporal(metric, &History::empty(), &steps, DiscountSpec::UNDISCOUNTED)?;
        Ok(ForecastRow { kind, loads, q_sum, f })
    };
    Ok(vec![
        row(FormulationKind::Hfop, hfop_loads, hfop_q)?,
        row(FormulationKind::Msdhfop, ms_loads, plan.quality_term)?,
    ])
}

fn forecast_table(rows: &[ForecastRow]) -> Table {
    let mut t = Table::new("forecast", &["formulation", "step_loads", "sum_Q", "F"]);
    for r in rows {
        let loads = r.loads.iter().map(|l| nums(l)).collect::<Vec<_>>().join(" ");
        t.push(vec![r.kind.tag().into(), loads, num(r.q_sum), num(r.f)]);
    }
    t
}

// ---------------------------------------------------------------- vrp

#[derive(Debug, Clone, PartialEq)]
pub struct VrpRow {
    pub kind: FormulationKind,
    pub route_lengths: Vec<f64>,
    pub total_distance: f64,
    pub gap: f64,
    /// Per-vehicle history plus this step.
    pub cumulative: Vec<f64>,
    pub proven_optimal: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VrpResult {
    pub instance: VrpInstance,
    pub history: History,
    pub rows: Vec<VrpRow>,
}

fn vrp_specs() -> Result<Vec<FormulationSpec>> {
    let m = MetricKind::MaxMinGap;
    Ok(vec![
        FormulationSpec::op(m),
        FormulationSpec::fop(VRP_BETA, m)?,
        FormulationSpec::hfop(VRP_BETA, m)?,
    ])
}

pub fn vrp_fixture(cfg: &ExperimentConfig) -> Result<(VrpInstance, History)> {
    let inst = gen_vrp(VRP_GRID, VRP_POINTS, VRP_VEHICLES, cfg.seed)?;
    let hist = gen_vrp_history(
        cfg.vrp_history_steps,
        VRP_GRID,
        VRP_POINTS,
        VRP_VEHICLES,
        cfg.seed.wrapping_add(1000),
    )?;
    Ok((inst, hist))
}

fn vrp_row(spec: &FormulationSpec, inst: &VrpInstance, hist: &History) -> Result<VrpRow> {
    let started = Instant::now();
    let plan = solve(spec, hist, &[DomainInstance::Vrp(inst.clone())], &SolverChoice::Enumeration)?;
    let wall_time_s = started.elapsed().as_secs_f64();
    let lengths = plan.per_step_utilities[0].values.clone();
    let base = hist.cumulative().unwrap_or_else(|| vec![0.0; lengths.len()]);
    Ok(VrpRow {
        kind: spec.kind,
        total_distance: lengths.iter().sum(),
        gap: MetricKind::MaxMinGap.eval(&lengths),
        cumulative: base.iter().zip(&lengths).map(|(a, b)| a + b).collect(),
        route_lengths: lengths,
        proven_optimal: plan.diagnostics.proven_optimal,
        wall_time_s,
    })
}

/// OP, FOP and HFOP on one generated routing instance with a generated history.
pub fn vrp(cfg: &ExperimentConfig) -> Result<VrpResult> {
    let (instance, history) = vrp_fixture(cfg)?;
    let rows = vrp_specs()?
        .iter()
        .map(|s| vrp_row(s, &instance, &history))
        .collect::<Result<_>>()?;
    Ok(VrpResult { instance, history, rows })
}

fn vrp_tables(r: &VrpResult) -> Vec<Table> {
    let n = r.instance.vehicles.len();
    let mut header = vec!["formulation".to_string()];
    for v in &r.instance.vehicles {
        header.push(format!("{v}_length"));
    }
    header.extend(["total_distance", "gap", "cumulative", "proven_optimal"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut t = Table::new("vrp", &header_refs);
    for row in &r.rows {
        let mut cells = vec![row.kind.tag().to_string()];
        cells.extend(row.route_lengths.iter().map(|v| num(*v)));
        cells.push(num(row.total_distance));
        cells.push(num(row.gap));
        cells.push(nums(&row.cumulative));
        cells.push(row.proven_optimal.to_string());
        t.push(cells);
    }
    let mut h = Table::new("vrp_history", &["step", "vehicle", "distance"]);
    for (k, step) in r.history.steps.iter().enumerate() {
        for (v, d) in step.entities.iter().zip(&step.values) {
            h.push(vec![k.to_string(), v.clone(), num(*d)]);
        }
    }
    debug_assert!(r.rows.iter().all(|row| row.route_lengths.len() == n));
    vec![t, h]
}

// ---------------------------------------------------------------- tap

#[derive(Debug, Clone, PartialEq)]
pub struct TapMetrics {
    pub kind: FormulationKind,
    /// Instances whose most expensive assigned task costs 30.
    pub max30_count: usize,
    pub total_cost: f64,
    /// Sum over instances of the mean cost of the W agents.
    pub w_cost: f64,
    pub non_w_cost: f64,
    /// Sum over the first three instances of the mean cost of the C agents.
    pub c_first3: f64,
    pub c_last3: f64,
    pub proven_optimal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapRunResult {
    pub run: usize,
    pub seed: u64,
    pub metrics: Vec<TapMetrics>,
}

fn mean_over(costs: &[f64], agents: &[usize]) -> f64 {
    agents.iter().map(|&a| costs[a]).sum::<f64>() / agents.len() as f64
}

fn tap_metrics(kind: FormulationKind, run: &TapRun, costs: &[Vec<f64>], proven_optimal: bool) -> TapMetrics {
    let n = costs[0].len();
    let non_w: Vec<usize> = (0..n).filter(|a| !run.w.contains(a)).collect();
    let half = costs.len() / 2;
    TapMetrics {
        kind,
        max30_count: costs
            .iter()
            .filter(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max) >= 30.0)
            .count(),
        total_cost: costs.iter().flatten().sum(),
        w_cost: costs.iter().map(|c| mean_over(c, &run.w)).sum(),
        non_w_cost: costs.iter().map(|c| mean_over(c, &non_w)).sum(),
        c_first3: costs[..half].iter().map(|c| mean_over(c, &run.c)).sum(),
        c_last3: costs[half..].iter().map(|c| mean_over(c, &run.c)).sum(),
        proven_optimal,
    }
}

fn tap_specs() -> Result<Vec<FormulationSpec>> {
    let m = MetricKind::MinimaxCost;
    Ok(vec![
        FormulationSpec::op(m),
        FormulationSpec::fop(TAP_BETA, m)?,
        FormulationSpec::hfop(TAP_BETA, m)?,
        FormulationSpec::msdhfop(TAP_BETA, TAP_DISCOUNT, TAP_DISCOUNT, crate::instance_gen::TAP_INSTANCES, m)?,
    ])
}

/// Solves one formulation on a task-assignment run. Single-step formulations
/// solve each instance exactly against the run's fixed history; MSDHFOP plans
/// all instances in one solve, stopped at `node_limit` nodes.
pub fn tap_solve(spec: &FormulationSpec, run: &TapRun, node_limit: Option<usize>) -> Result<TapMetrics> {
    let insts: Vec<DomainInstance> = run.instances.iter().cloned().map(DomainInstance::Tap).collect();
    let (costs, proven) = if spec.kind == FormulationKind::Msdhfop {
        let plan = solve(spec, &run.history, &insts, &SolverChoice::Milp { node_limit })?;
        (
            plan.per_step_utilities.iter().map(|u| u.values.clone()).collect(),
            plan.diagnostics.proven_optimal,
        )
    } else {
        let mut costs = Vec::with_capacity(insts.len());
        let mut proven = true;
        for inst in &insts {
            let plan = solve(spec, &run.history, std::slice::from_ref(inst), &SolverChoice::Enumeration)?;
            proven &= plan.diagnostics.proven_optimal;
            costs.push(plan.per_step_utilities[0].values.clone());
        }
        (costs, proven)
    };
    Ok(tap_metrics(spec.kind, run, &costs, proven))
}

fn tap_one(cfg: &ExperimentConfig, r: usize) -> Result<TapRunResult> {
    let seed = cfg.seed.wrapping_add(r as u64);
    let run = gen_tap_run(seed)?;
    let metrics = tap_specs()?
        .iter()
        .map(|s| tap_solve(s, &run, cfg.tap_node_limit))
        .collect::<Result<_>>()?;
    Ok(TapRunResult { run: r, seed, metrics })
}

/// `cfg.tap_runs` seeded runs (seed, seed+1, ...), spread over
/// `cfg.threads` workers and returned in run order.
pub fn tap(cfg: &ExperimentConfig) -> Result<Vec<TapRunResult>> {
    let threads = cfg.threads.max(1).min(cfg.tap_runs.max(1));
    if threads == 1 {
        return (0..cfg.tap_runs).map(|r| tap_one(cfg, r)).collect();
    }
    let mut slots: Vec<Option<Result<TapRunResult>>> = (0..cfg.tap_runs).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                scope.spawn(move || {
                    (w..cfg.tap_runs)
                        .step_by(threads)
                        .map(|r| (r, tap_one(cfg, r)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (r, res) in h.join().expect("task-assignment worker panicked") {
                slots[r] = Some(res);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every run is assigned")).collect()
}

/// Mean and standard deviation of one metric across runs, per formulation.
pub fn tap_summary(runs: &[TapRunResult], f: impl Fn(&TapMetrics) -> f64) -> Vec<(FormulationKind, f64, f64)> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    (0..first.metrics.len())
        .map(|i| {
            let vals: Vec<f64> = runs.iter().map(|r| f(&r.metrics[i])).collect();
            (first.metrics[i].kind, mean(&vals), std_dev(&vals))
        })
        .collect()
}

fn tap_tables(runs: &[TapRunResult]) -> Vec<Table> {
    let mut t = Table::new(
        "tap",
        &[
            "run",
            "seed",
            "formulation",
            "max30_count",
            "total_cost",
            "W_cost",
            "non_W_cost",
            "C_cost_first3",
            "C_cost_last3",
            "proven_optimal",
        ],
    );
    for r in runs {
        for m in &r.metrics {
            t.push(vec![
                r.run.to_string(),
                r.seed.to_string(),
                m.kind.tag().into(),
                m.max30_count.to_string(),
                num(m.total_cost),
                num(m.w_cost),
                num(m.non_w_cost),
                num(m.c_first3),
                num(m.c_last3),
                m.proven_optimal.to_string(),
            ]);
        }
    }
    let mut s = Table::new("tap_summary", &["formulation", "quantity", "mean", "std"]);
    let quantities: [(&str, fn(&TapMetrics) -> f64); 6] = [
        ("max30_count", |m| m.max30_count as f64),
        ("total_cost", |m| m.total_cost),
        ("W_cost", |m| m.w_cost),
        ("non_W_cost", |m| m.non_w_cost),
        ("C_cost_first3", |m| m.c_first3),
        ("C_cost_last3", |m| m.c_last3),
    ];
    if let Some(first) = runs.first() {
        for (i, m) in first.metrics.iter().enumerate() {
            for (name, f) in quantities {
                let vals: Vec<f64> = runs.iter().map(|r| f(&r.metrics[i])).collect();
                s.push(vec![m.kind.tag().into(), name.into(), num(mean(&vals)), num(std_dev(&vals))]);
            }
        }
    }
    vec![t, s]
}

// ---------------------------------------------------------------- nsp

#[derive(Debug, Clone, PartialEq)]
pub struct NspRow {
    pub history: &'static str,
    pub kind: FormulationKind,
    pub solution: Solution,
    pub utilities: Vec<f64>,
    pub q: f64,
    pub f: f64,
    pub f_h: f64,
    pub f_h_gamma: f64,
    pub fairness_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NspResult {
    pub h1: History,
    pub h2: History,
    pub rows: Vec<NspRow>,
}

/// FOP, HFOP and DHFOP on the weekly reference instance under the two
/// constructed histories.
pub fn nsp() -> Result<NspResult> {
    let metric = MetricKind::MaximinRatio;
    let inst = DomainInstance::Nsp(NspInstance::weekly_reference());
    let (h1, h2) = gen_nsp_histories(0)?;
    let specs = [
        FormulationSpec::fop(NSP_BETA, metric)?,
        FormulationSpec::hfop(NSP_BETA, metric)?,
        FormulationSpec::dhfop(NSP_BETA, NSP_GAMMA, metric)?,
    ];
    let mut rows = Vec::new();
    for (name, hist) in [("H1", &h1), ("H2", &h2)] {
        for spec in &specs {
            let plan = solve(spec, hist, std::slice::from_ref(&inst), &SolverChoice::Enumeration)?;
            let u = plan.per_step_utilities[0].clone();
            let single = std::slice::from_ref(&u);
            rows.push(NspRow {
                history: name,
                kind: spec.kind,
                solution: plan.plan[0].clone(),
                q: plan.quality_term,
                f: metric.eval(&u.values),
                f_h: temporal(metric, hist, single, DiscountSpec::UNDISCOUNTED)?,
                f_h_gamma: temporal(metric, hist, single, DiscountSpec { gamma: NSP_GAMMA, tau: 1.0 })?,
                fairness_term: plan.fairness_term,
                utilities: u.values,
            });
        }
    }
    Ok(NspResult { h1, h2, rows })
}

fn shift_roster(sol: &Solution, inst: &NspInstance) -> String {
    match sol {
        Solution::Nsp(s) => (0..SHIFTS)
            .map(|k| inst.nurses[s.nurse_of_shift[k]].as_str())
            .collect::<Vec<_>>()
            .join(" "),
        _ => String::new(),
    }
}

fn nsp_tables(r: &NspResult) -> Result<Vec<Table>> {
    let inst = NspInstance::weekly_reference();
    let mut t = Table::new(
        "nsp",
        &["history", "formulation", "roster", "utilities", "Q", "F", "F_H", "F_H_gamma", "fairness_term"],
    );
    for row in &r.rows {
        t.push(vec![
            row.history.into(),
            row.kind.tag().into(),
            shift_roster(&row.solution, &inst),
            nums(&row.utilities),
            num(row.q),
            num(row.f),
            num(row.f_h),
            num(row.f_h_gamma),
            num(row.fairness_term),
        ]);
    }
    let mut h = Table::new("nsp_history", &["history", "step", "utilities", "F", "F_H", "F_H_gamma"]);
    let metric = MetricKind::MaximinRatio;
    for (name, hist) in [("H1", &r.h1), ("H2", &r.h2)] {
        for k in 0..hist.len() {
            let upto = History::new(hist.steps[..=k].to_vec())?;
            h.push(vec![
                name.into(),
                k.to_string(),
                nums(&hist.steps[k].values),
                num(metric.eval(&hist.steps[k].values)),
                num(crate::fairness::history_fairness(metric, &upto, 1.0)?),
                num(crate::fairness::history_fairness(metric, &upto, NSP_GAMMA)?),
            ]);
        }
    }
    Ok(vec![t, h])
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: FormulationKind,
    pub times_s: Vec<f64>,
}

impl BenchRow {
    pub fn mean(&self) -> f64 {
        mean(&self.times_s)
    }

    pub fn median(&self) -> f64 {
        median(&self.times_s)
    }
}

/// Wall-clock time per formulation over `repeat` repetitions. Routing times
/// one solve of the generated instance; task assignment times every run of
/// the experiment.
pub fn bench(id: ExperimentId, cfg: &ExperimentConfig, repeat: usize) -> Result<Vec<BenchRow>> {
    if repeat == 0 {
        return Err(CoreError::Argument("--repeat must be at least 1".into()));
    }
    match id {
        ExperimentId::Vrp => {
            let (inst, hist) = vrp_fixture(cfg)?;
            vrp_specs()?
                .iter()
                .map(|s| {
                    let times_s = (0..repeat)
                        .map(|_| vrp_row(s, &inst, &hist).map(|r| r.wall_time_s))
                        .collect::<Result<_>>()?;
                    Ok(BenchRow { kind: s.kind, times_s })
                })
                .collect()
        }
        ExperimentId::Tap => {
            let runs = (0..cfg.tap_runs)
                .map(|r| gen_tap_run(cfg.seed.wrapping_add(r as u64)))
                .collect::<Result<Vec<_>>>()?;
            tap_specs()?
                .iter()
                .map(|s| {
                    let mut times_s = Vec::with_capacity(repeat * runs.len());
                    for _ in 0..repeat {
                        for run in &runs {
                            let started = Instant::now();
                            tap_solve(s, run, cfg.tap_node_limit)?;
                            times_s.push(started.elapsed().as_secs_f64());
                        }
                    }
                    Ok(BenchRow { kind: s.kind, times_s })
                })
                .collect()
        }
        other => Err(CoreError::Argument(format!("no benchmark for experiment '{other}' (vrp, tap)"))),
    }
}

pub fn bench_table(id: ExperimentId, rows: &[BenchRow]) -> Table {
    let mut t = Table::new(&format!("{id}_bench"), &["formulation", "mean_time_s", "median_time_s", "repeats"]);
    for r in rows {
        t.push(vec![r.kind.tag().into(), num(r.mean()), num(r.median()), r.times_s.len().to_string()]);
    }
    t
}
