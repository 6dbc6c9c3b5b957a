mod common;

use common::*;
use mqs_cli::{bench_startvec, bench_update, cmd_bench_startvec, cmd_bench_update, cmd_cfl, cmd_run, CliError};
use mqs_core::integrate::{Method, RunResult};

fn read(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn probes(csv: &str) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn explicit_run_writes_series_summary_and_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = tiny();
    let result = cmd_run(&s, Method::Explicit, dir.path(), None).unwrap();
    let csv = read(&dir.path().join("explicit.csv"));
    assert!(csv.starts_with("t,probe_avg_B,dt,cumulative_pcg_iterations,update_count\n"));
    assert_eq!(csv.lines().count(), result.step_count + 1);
    let summary: serde_json::Value = serde_json::from_str(&read(&dir.path().join("explicit_summary.json"))).unwrap();
    assert_eq!(summary["step_count"], result.step_count);
    assert_eq!(summary["scenario"], "tiny");
    assert!(summary["lambda_max"].as_f64().unwrap() > 0.0);
    assert!(read(&dir.path().join("explicit_iterations.csv")).starts_with("step,purpose,strategy,iterations,residual\n"));
}

#[test]
fn linear_explicit_run_has_a_monotone_probe() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace(
        "law = { kind = \"brauer\", k1 = 200.0, k2 = 5.0, k3 = 3.0 }",
        "law = { kind = \"linear\", nu = 796.0 }",
    );
    let (s, _) = mqs_cli::parse_scenario(&text, std::path::Path::new("."), "lin").unwrap();
    cmd_run(&s, Method::Explicit, dir.path(), None).unwrap();
    let p = probes(&read(&dir.path().join("explicit.csv")));
    assert!(p.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn implicit_run_with_fifty_steps_has_fifty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = tiny();
    let result = cmd_run(&s, Method::Implicit, dir.path(), Some(s.t_end / 50.0)).unwrap();
    assert_eq!(result.step_count, 50);
    assert_eq!(read(&dir.path().join("implicit.csv")).lines().count(), 51);
}

#[test]
fn snapshots_are_written_when_requested() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = tiny_with("[solver]\nsnapshot_every = 100\n");
    let result = cmd_run(&s, Method::Explicit, dir.path(), None).unwrap();
    let files = std::fs::read_dir(dir.path().join("snapshots")).unwrap().count();
    assert_eq!(files, 2 * result.snapshots.len());
    assert!(read(&dir.path().join("snapshots/explicit_nodes_000100.csv")).lines().count() > 1);
}

#[test]
fn unstable_override_reports_instability() {
    let (s, _) = tiny();
    let (probe, _) = tiny_with("[solver]\ndt_override = 1.0e-4\n");
    assert!(probe.solver.dt_override.is_some());
    let err = mqs_cli::run_scenario(&probe, Method::Explicit, None).unwrap_err();
    assert!(matches!(err, CliError::Solver(mqs_core::Error::Instability { .. })), "{err}");
    assert!(err.to_string().contains("instability"));
    assert_eq!(err.exit_code(), mqs_cli::exit_code::INSTABILITY);
    drop(s);
}

#[test]
fn startvec_bench_with_one_strategy_has_one_row() {
    let (s, w) = tiny();
    let bench = bench_startvec(&s, &w, &["previous".to_string()], 1).unwrap();
    assert_eq!(bench.rows.len(), 1);
    assert_eq!(bench.rows[0].max_probe_deviation, 0.0);
}

#[test]
fn startvec_bench_shares_dt_and_updates_across_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let (s, w) = tiny();
    let names: Vec<String> = ["previous", "cspe", "pod"].iter().map(|s| s.to_string()).collect();
    let bench = cmd_bench_startvec(&s, &w, &names, dir.path(), 2).unwrap();
    let base: &RunResult = &bench.results[0];
    for r in &bench.results[1..] {
        assert_eq!(r.schedule, base.schedule);
        assert_eq!(r.update_count, base.update_count);
    }
    let csv = read(&dir.path().join("bench_startvec.csv"));
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().next().unwrap().starts_with("strategy,"));
    for n in &names {
        assert!(dir.path().join(format!("startvec_{n}.csv")).exists());
    }
    let prev = bench.row("previous").unwrap().mean_iterations;
    assert!(bench.row("cspe").unwrap().mean_iterations <= prev);
    assert!(bench.row("pod").unwrap().mean_iterations <= prev);
    assert!(bench.max_deviation() <= 1e-5);
}

#[test]
fn startvec_bench_is_independent_of_thread_count() {
    let (s, w) = tiny();
    let names: Vec<String> = ["previous", "pod"].iter().map(|s| s.to_string()).collect();
    let one = bench_startvec(&s, &w, &names, 1).unwrap();
    let two = bench_startvec(&s, &w, &names, 2).unwrap();
    for (a, b) in one.results.iter().zip(&two.results) {
        assert_eq!(a.to_csv(), b.to_csv());
    }
}

#[test]
fn zero_tolerance_updates_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = tiny();
    let bench = cmd_bench_update(&s, &[1e-3, 1e-2], dir.path(), 1).unwrap();
    let zero = bench.row(0.0).unwrap();
    assert_eq!(zero.update_count, zero.step_count);
    assert_eq!(zero.max_probe_deviation, 0.0);
    assert!(bench.row(1e-2).unwrap().update_count < zero.update_count);
    assert_eq!(read(&dir.path().join("bench_update.csv")).lines().count(), 4);
}

#[test]
fn update_bench_rejects_negative_tolerance() {
    let (s, _) = tiny();
    let err = bench_update(&s, &[-1.0], 1).unwrap_err();
    assert_eq!(err.exit_code(), mqs_cli::exit_code::CONFIG);
}

#[test]
fn cfl_report_scales_with_refinement_and_conductivity() {
    let (base, _) = tiny();
    let r0 = cmd_cfl(&base).unwrap();
    assert!((r0.dt_cfl - 0.95 * 2.0 / r0.lambda_max).abs() <= 1e-12 * r0.dt_cfl);
    assert_eq!(r0.projected_steps, (base.t_end / r0.dt_cfl).ceil() as u64);
    let (hot, _) = mqs_cli::parse_scenario(
        &TINY.replace("conductivity = 1e6", "conductivity = 1e7"),
        std::path::Path::new("."),
        "hot",
    )
    .unwrap();
    let r1 = cmd_cfl(&hot).unwrap();
    assert!((r1.dt_cfl / r0.dt_cfl - 10.0).abs() < 1e-3);
    assert!(r0.heuristic_dt > 0.0 && !r0.heuristic_note.is_empty());
}
