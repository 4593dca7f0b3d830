//! `tempfair`: solve formulations on instance files, reproduce experiments as
//! CSV, generate instances and histories, and time formulations.
//!
//! Exit codes: 0 success, 1 infeasible instance, 2 usage or input error,
//! 3 numerical failure inside the solver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tempfair_core::domains::{
    tap_build_ip, vrp_build_ip, CapInstance, NspInstance, TapInstance, VrpInstance,
};
use tempfair_core::experiments::{bench, bench_table, reproduce, ExperimentConfig, ExperimentId};
use tempfair_core::fairness::{DiscountSpec, History};
use tempfair_core::history_store::{RunLog, RunRecord, LOG_HEADER};
use tempfair_core::instance_gen::{gen_nsp, gen_nsp_histories, gen_tap, gen_vrp, gen_vrp_history};
use tempfair_core::objective::ip_objective;
use tempfair_core::{
    solve, CoreError, DomainInstance, FormulationKind, FormulationSpec, MetricKind, ScoredPlan, SolverChoice,
};
use tempfair_milp::{to_lp_string, MilpError};

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "tempfair", version, about = "Temporal fairness formulations and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one formulation on instance files and print a JSON report.
    Solve(SolveArgs),
    /// Run an experiment and write its CSV tables.
    Reproduce(ReproduceArgs),
    /// Generate an instance (and optionally a history).
    Gen(GenArgs),
    /// Time each formulation of an experiment.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Auto,
    Enumeration,
    Milp,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance files, one per planned step (a course assignment file holds
    /// all of its steps).
    #[arg(required = true)]
    instances: Vec<PathBuf>,
    /// History as a run log or a JSON history file.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Only the most recent N history steps are used.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value = "hfop")]
    formulation: String,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// rmm, qmmg, mm, gap or minimax; defaults to the domain's usual metric.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long, value_enum, default_value = "auto")]
    backend: Backend,
    /// Branch-and-bound node limit for the integer-program backend.
    #[arg(long)]
    node_limit: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append the committed step to this run log.
    #[arg(long)]
    append_log: Option<PathBuf>,
    /// Write the integer program in LP format here (routing and task assignment).
    #[arg(long)]
    lp_dump: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// compare-F-FH, fop-vs-hfop, gamma-sweep, beta-sweep, forecast, vrp, tap or nsp.
    id: String,
    #[arg(long, env = "TEMPFAIR_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, env = "TEMPFAIR_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    tap_runs: usize,
    /// Node limit for the multi-step task-assignment solve; 0 means none.
    #[arg(long, env = "TEMPFAIR_TAP_NODE_LIMIT", default_value_t = 200)]
    tap_node_limit: usize,
    #[arg(long, env = "TEMPFAIR_THREADS", default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    domain: GenDomain,
}

#[derive(Subcommand)]
enum GenDomain {
    /// Random routing instance on a grid with the depot at the centre.
    Vrp {
        #[arg(long, default_value_t = 11)]
        grid: usize,
        #[arg(long, default_value_t = 12)]
        points: usize,
        #[arg(long, default_value_t = 4)]
        vehicles: usize,
        /// Also write a history of this many steps to `--history-out`.
        #[arg(long, requires = "history_out")]
        history_steps: Option<usize>,
        #[arg(long)]
        history_out: Option<PathBuf>,
        #[command(flatten)]
        common: GenCommon,
    },
    /// Random task-assignment instance.
    Tap {
        #[arg(long, default_value_t = 40)]
        n: usize,
        /// Agents (0-based) that lose their cheap task.
        #[arg(long, value_delimiter = ',')]
        constrained: Vec<usize>,
        #[command(flatten)]
        common: GenCommon,
    },
    /// Random nurse preference table; `--histories-out` writes the two
    /// constructed histories for the reference instance.
    Nsp {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long)]
        histories_out: Option<PathBuf>,
        #[command(flatten)]
        common: GenCommon,
    },
}

#[derive(Args)]
struct GenCommon {
    #[arg(long, env = "TEMPFAIR_SEED", default_value_t = 1)]
    seed: u64,
    /// Instance file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// vrp or tap.
    id: String,
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    #[arg(long, env = "TEMPFAIR_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    tap_runs: usize,
    #[arg(long, env = "TEMPFAIR_TAP_NODE_LIMIT", default_value_t = 200)]
    tap_node_limit: usize,
    /// CSV file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Infeasible(_)) => EXIT_INFEASIBLE,
        Some(CoreError::Solver(MilpError::Numerical(_))) => EXIT_NUMERICAL,
        Some(CoreError::Solver(_)) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Step instances from files; the first line of each file names its domain.
fn load_instances(paths: &[PathBuf]) -> anyhow::Result<Vec<DomainInstance>> {
    let mut out = Vec::new();
    for p in paths {
        let text = read(p)?;
        let header = text.lines().next().unwrap_or("").trim();
        let ctx = || format!("parsing {}", p.display());
        match header {
            "cap v1" => out.extend(DomainInstance::cap_steps(&CapInstance::parse(&text).with_context(ctx)?)),
            "vrp v1" => out.push(DomainInstance::Vrp(VrpInstance::parse(&text).with_context(ctx)?)),
            "tap v1" => out.push(DomainInstance::Tap(TapInstance::parse(&text).with_context(ctx)?)),
            "nsp v1" => out.push(DomainInstance::Nsp(NspInstance::parse(&text).with_context(ctx)?)),
            other => {
                return Err(anyhow!(CoreError::Parse {
                    line: 1,
                    msg: format!("{}: unknown instance header '{other}'", p.display()),
                }))
            }
        }
    }
    if out.iter().any(|i| i.domain() != out[0].domain()) {
        bail!(CoreError::Argument("all instance files must belong to one domain".into()));
    }
    Ok(out)
}

fn load_history(path: &Path) -> anyhow::Result<History> {
    let text = read(path)?;
    if text.lines().next().map(str::trim_end) == Some(LOG_HEADER) {
        return Ok(RunLog::open(path)?.load_history(None)?);
    }
    serde_json::from_str(&text)
        .map_err(|e| anyhow!(CoreError::Parse { line: e.line(), msg: e.to_string() }))
        .with_context(|| format!("parsing history {}", path.display()))
}

fn default_metric(domain: &str) -> MetricKind {
    match domain {
        "vrp" => MetricKind::MaxMinGap,
        "tap" => MetricKind::MinimaxCost,
        "nsp" => MetricKind::MaximinRatio,
        _ => MetricKind::RelativeMaxMin,
    }
}

fn cmd_solve(a: SolveArgs) -> anyhow::Result<()> {
    let instances = load_instances(&a.instances)?;
    let domain = instances[0].domain();
    let kind: FormulationKind = a.formulation.parse()?;
    let metric = match &a.metric {
        Some(m) => m.parse()?,
        None => default_metric(domain),
    };
    let spec = FormulationSpec::new(kind, a.beta, DiscountSpec { gamma: a.gamma, tau: a.tau }, a.horizon, metric)?
        .with_window(a.window);
    let history = match &a.history {
        Some(p) => load_history(p)?,
        None => History::empty(),
    };
    let backend = match a.backend {
        Backend::Auto if a.node_limit.is_some() => SolverChoice::Milp { node_limit: a.node_limit },
        Backend::Auto => SolverChoice::Auto,
        Backend::Enumeration => SolverChoice::Enumeration,
        Backend::Milp => SolverChoice::Milp { node_limit: a.node_limit },
    };
    if let Some(p) = &a.lp_dump {
        fs::write(p, lp_model(&spec, &history, &instances)?).with_context(|| format!("writing {}", p.display()))?;
    }
    let plan = solve(&spec, &history, &instances, &backend)?;
    write_or_print(a.out.as_deref(), &report(&spec, &plan)?)?;
    if let Some(p) = &a.append_log {
        let log = RunLog::open(p)?;
        let next = log.records()?.last().map_or(0, |r| r.timestep + 1);
        log.append(&RunRecord::from_plan(next, domain, &spec, &plan))?;
    }
    Ok(())
}

fn lp_model(spec: &FormulationSpec, history: &History, instances: &[DomainInstance]) -> anyhow::Result<String> {
    let steps = instances
        .get(..spec.horizon)
        .ok_or_else(|| CoreError::Argument(format!("horizon {} exceeds the {} steps given", spec.horizon, instances.len())))?;
    let obj = ip_objective(spec, history, steps[0].entities().len())?;
    let model = match &steps[0] {
        DomainInstance::Vrp(_) => {
            let v: Vec<VrpInstance> = steps
                .iter()
                .filter_map(|s| match s {
                    DomainInstance::Vrp(v) => Some(v.clone()),
                    _ => None,
                })
                .collect();
            vrp_build_ip(&v, &obj)?.model
        }
        DomainInstance::Tap(_) => {
            let t: Vec<TapInstance> = steps
                .iter()
                .filter_map(|s| match s {
                    DomainInstance::Tap(t) => Some(t.clone()),
                    _ => None,
                })
                .collect();
            tap_build_ip(&t, &obj)?.model
        }
        other => bail!(CoreError::Argument(format!(
            "no integer program for the {} domain",
            other.domain()
        ))),
    };
    Ok(to_lp_string(&model))
}

fn report(spec: &FormulationSpec, plan: &ScoredPlan) -> anyhow::Result<String> {
    let value = serde_json::json!({
        "formulation": spec,
        "quality_term": plan.quality_term,
        "fairness_term": plan.fairness_term,
        "total": plan.total,
        "per_step_utilities": plan.per_step_utilities,
        "plan": plan.plan,
        "diagnostics": plan.diagnostics,
    });
    let mut s = serde_json::to_string_pretty(&value)?;
    s.push('\n');
    Ok(s)
}

fn cmd_reproduce(a: ReproduceArgs) -> anyhow::Result<()> {
    let id: ExperimentId = a.id.parse()?;
    let cfg = ExperimentConfig {
        seed: a.seed,
        tap_runs: a.tap_runs,
        tap_node_limit: (a.tap_node_limit > 0).then_some(a.tap_node_limit),
        threads: a.threads,
        ..ExperimentConfig::default()
    };
    let tables = reproduce(id, &cfg)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for t in tables {
        let path = a.out_dir.join(t.file_name());
        fs::write(&path, t.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn history_json(h: &History) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(h)?;
    s.push('\n');
    Ok(s)
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<()> {
    match a.domain {
        GenDomain::Vrp {
            grid,
            points,
            vehicles,
            history_steps,
            history_out,
            common,
        } => {
            let inst = gen_vrp(grid, points, vehicles, common.seed)?;
            write_or_print(common.out.as_deref(), &inst.to_text())?;
            if let (Some(k), Some(p)) = (history_steps, history_out) {
                let h = gen_vrp_history(k, grid, points, vehicles, common.seed.wrapping_add(1000))?;
                fs::write(&p, history_json(&h)?).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        GenDomain::Tap { n, constrained, common } => {
            let inst = gen_tap(n, &constrained, common.seed)?;
            write_or_print(common.out.as_deref(), &inst.to_text())?;
        }
        GenDomain::Nsp { n, histories_out, common } => {
            let inst = gen_nsp(n, common.seed)?;
            write_or_print(common.out.as_deref(), &inst.to_text())?;
            if let Some(dir) = histories_out {
                let (h1, h2) = gen_nsp_histories(common.seed)?;
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("H1.json"), history_json(&h1)?)?;
                fs::write(dir.join("H2.json"), history_json(&h2)?)?;
            }
        }
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<()> {
    let id: ExperimentId = a.id.parse()?;
    let cfg = ExperimentConfig {
        seed: a.seed,
        tap_runs: a.tap_runs,
        tap_node_limit: (a.tap_node_limit > 0).then_some(a.tap_node_limit),
        ..ExperimentConfig::default()
    };
    let rows = bench(id, &cfg, a.repeat)?;
    write_or_print(a.out.as_deref(), &bench_table(id, &rows).to_csv())
}
