use tempfair_core::experiments::*;
use tempfair_core::{CoreError, FormulationKind};

#[test]
fn experiment_ids_parse() {
    for id in ExperimentId::ALL {
        assert_eq!(id.tag().parse::<ExperimentId>().unwrap(), id);
        assert_eq!(id.to_string(), id.tag());
    }
    match "compare".parse::<ExperimentId>() {
        Err(CoreError::Argument(msg)) => assert!(msg.contains("beta-sweep")),
        other => panic!("expected an argument error, got {other:?}"),
    }
    assert!(ExperimentId::Vrp.benchable() && ExperimentId::Tap.benchable());
    assert!(!ExperimentId::Nsp.benchable());
}

#[test]
fn number_formatting() {
    assert_eq!(num(-0.0), "0");
    assert_eq!(num(0.1), "0.1");
    assert_eq!(num(2.0), "2");
    assert_eq!(num(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
}

#[test]
fn compare_and_planning_values() {
    let rows = compare_f_fh().unwrap();
    let f: Vec<f64> = rows.iter().map(|r| r.f).collect();
    let f_h: Vec<f64> = rows.iter().map(|r| r.f_h).collect();
    assert_eq!(f[0], 1.0);
    assert!((f[1] - 2.0 / 3.0).abs() < 1e-12 && f[2] == 0.0);
    for (got, want) in f_h.iter().zip([2.0 / 3.0, 11.0 / 15.0, 13.0 / 15.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    let plans = planning_multiple_steps().unwrap();
    let v: Vec<f64> = plans.iter().map(|p| p.f_h_gamma_tau).collect();
    for (got, want) in v.iter().zip([17.0 / 18.0, 1.0, 8.0 / 9.0]) {
        assert!((got - want).abs() < 1e-12, "{v:?}");
    }
}

#[test]
fn forecast_rows() {
    let rows = forecast().unwrap();
    assert_eq!(rows.len(), 2);
    let (h, m) = (&rows[0], &rows[1]);
    assert_eq!(h.kind, FormulationKind::Hfop);
    assert_eq!(m.kind, FormulationKind::Msdhfop);
    assert_eq!((h.q_sum, m.q_sum), (10.0, 12.0));
    assert!((h.f - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(m.f, 1.0);
    assert_eq!(m.loads, vec![vec![2.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0], vec![0.0, 2.0]]);
}

fn loads_seq(run: &BetaRun) -> Vec<String> {
    run.steps
        .iter()
        .map(|s| s.loads.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";"))
        .collect()
}

#[test]
fn beta_sweep_sequences_are_pinned() {
    let runs = beta_sweep().unwrap();
    let series: Vec<&str> = runs.iter().map(|r| r.series.as_str()).collect();
    assert_eq!(series, ["hfop_beta_0.125", "hfop_beta_0.25", "hfop_beta_0.75", "hfop_beta_2", "op"]);
    let (a, b, c) = ("1;1;0", "0.5;0.5;1", "2;0;0");
    let pinned: [Vec<&str>; 5] = [
        vec![c, "0;2;0", a, a, a, b, b, a, b, b],
        vec![a, a, a, b, b, a, b, b, a, b],
        vec![a, b, "1;0.5;0.5", "0.5;1;0.5", b, "1;0.5;0.5", "0.5;1;0.5", b, "1;0.5;0.5", "0.5;1;0.5"],
        vec!["1;0.5;0.5", "0.5;1;0.5", b, "1;0.5;0.5", "0.5;1;0.5", b, "1;0.5;0.5", "0.5;1;0.5", b, "1;0.5;0.5"],
        vec![c; 10],
    ];
    for (run, want) in runs.iter().zip(pinned.iter()) {
        assert_eq!(&loads_seq(run), want, "{}", run.series);
    }
    assert_eq!(runs[3].steps.iter().map(|s| s.f).collect::<Vec<_>>(), vec![-0.0625; 10]);
    assert_eq!((runs[0].steps[0].q, runs[0].steps[0].f), (1.0, -1.0));
    for w in runs[..4].windows(2) {
        assert!(w[1].mean_q() <= w[0].mean_q() && w[1].mean_f() >= w[0].mean_f());
    }
}

#[test]
fn fop_and_hfop_trajectories() {
    let rows = fop_vs_hfop(12).unwrap();
    let fop: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.series == FormulationKind::Fop).collect();
    let hfop: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.series == FormulationKind::Hfop).collect();
    assert_eq!((fop.len(), hfop.len()), (12, 12));
    for r in &fop {
        assert_eq!(r.loads, vec![1.5, 1.5]);
        assert!((r.f_h - r.balanced_closed_form).abs() < 1e-12);
    }
    assert_eq!(hfop[2].f_h, 1.0);
    assert!(hfop[2..].iter().all(|r| r.f_h == 1.0));
}

#[test]
fn gamma_sweep_matches_closed_form() {
    let traj = gamma_sweep(&GAMMAS, 40).unwrap();
    for t in &traj {
        for (s, c) in t.simulated.iter().zip(&t.closed_form) {
            assert!((s - c).abs() < 1e-9);
        }
    }
    let reach: Vec<Option<usize>> = traj.iter().map(|t| t.first_reach).collect();
    assert_eq!(reach, vec![Some(2), Some(5), Some(25)]);
}

#[test]
fn nsp_directional() {
    let res = nsp().unwrap();
    assert_eq!(res.rows.len(), 6);
    let row = |h: &str, k: FormulationKind| res.rows.iter().find(|r| r.history == h && r.kind == k).unwrap();
    // the discounted view favours the first history, whose fair weeks are recent
    assert!(row("H1", FormulationKind::Dhfop).f_h_gamma > row("H2", FormulationKind::Dhfop).f_h_gamma);
    // HFOP sees the same cumulative history under both traces
    assert_eq!(row("H1", FormulationKind::Hfop).solution, row("H2", FormulationKind::Hfop).solution);
    // DHFOP reacts to the trace and moves away from the senior-evening roster under H2
    assert_ne!(row("H1", FormulationKind::Dhfop).solution, row("H2", FormulationKind::Dhfop).solution);
}

fn csvs(tables: &[Table]) -> Vec<(String, String)> {
    tables.iter().map(|t| (t.file_name(), t.to_csv())).collect()
}

#[test]
fn reproduce_is_deterministic() {
    let cfg = ExperimentConfig::default();
    for id in [
        ExperimentId::CompareFFh,
        ExperimentId::FopVsHfop,
        ExperimentId::GammaSweep,
        ExperimentId::BetaSweep,
        ExperimentId::Forecast,
        ExperimentId::Vrp,
        ExperimentId::Nsp,
    ] {
        let a = csvs(&reproduce(id, &cfg).unwrap());
        let b = csvs(&reproduce(id, &cfg).unwrap());
        assert_eq!(a, b, "{id}");
        assert!(!a.is_empty());
        for (name, csv) in &a {
            assert!(name.starts_with(id.tag()));
            let mut reader = csv::Reader::from_reader(csv.as_bytes());
            let cols = reader.headers().unwrap().len();
            for rec in reader.records() {
                assert_eq!(rec.unwrap().len(), cols, "{name}");
            }
        }
    }
}

#[test]
fn small_tap_run_tables() {
    let cfg = ExperimentConfig {
        tap_runs: 1,
        tap_node_limit: Some(5),
        ..ExperimentConfig::default()
    };
    let tables = reproduce(ExperimentId::Tap, &cfg).unwrap();
    let names: Vec<String> = tables.iter().map(|t| t.file_name()).collect();
    assert_eq!(names, ["tap.csv", "tap_summary.csv"]);
    assert_eq!(tables[0].rows.len(), 4);
    assert_eq!(csvs(&tables), csvs(&reproduce(ExperimentId::Tap, &cfg).unwrap()));
}

#[test]
fn bench_rejects_bad_arguments() {
    let cfg = ExperimentConfig::default();
    assert!(matches!(bench(ExperimentId::Vrp, &cfg, 0), Err(CoreError::Argument(_))));
    assert!(matches!(bench(ExperimentId::Nsp, &cfg, 1), Err(CoreError::Argument(_))));
    let rows = bench(ExperimentId::Vrp, &cfg, 2).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.times_s.len() == 2));
    let t = bench_table(ExperimentId::Vrp, &rows);
    assert_eq!(t.file_name(), "vrp_bench.csv");
    assert_eq!(t.header, ["formulation", "mean_time_s", "median_time_s", "repeats"]);
}
