use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use mqs_core::integrate::{
    field_tables, max_relative_deviation, run_explicit, run_implicit, series_deviation, ExplicitSolver, ImplicitOptions,
    Method, RunResult,
};
use mqs_core::materials::MaterialModel;
use mqs_core::mesh::RegionKind;
use mqs_core::schur::SolvePurpose;
use serde::Serialize;

use crate::scenario::{Scenario, StrategyWindows};
use crate::CliError;

/// Runs a scenario without writing anything.
///
/// `implicit_dt` overrides the scenario's implicit step; without either the
/// implicit step defaults to `t_end / 100`.
pub fn run_scenario(scenario: &Scenario, method: Method, implicit_dt: Option<f64>) -> Result<RunResult, CliError> {
    match method {
        Method::Explicit => Ok(run_explicit(&scenario.problem, scenario.solver.clone(), scenario.t_end)?),
        Method::Implicit => {
            let dt = implicit_dt.or(scenario.implicit_dt).unwrap_or(scenario.t_end / 100.0);
            let options = ImplicitOptions {
                dt,
                newton: scenario.newton,
                output_every: scenario.solver.output_every,
                snapshot_every: scenario.solver.snapshot_every,
            };
            Ok(run_implicit(&scenario.problem, &options, scenario.t_end, None)?)
        }
    }
}

/// `run`: one simulation, writing `<method>.csv`, `<method>_summary.json`,
/// `<method>_iterations.csv` and optional field snapshots to `out_dir`.
pub fn cmd_run(scenario: &Scenario, method: Method, out_dir: &Path, implicit_dt: Option<f64>) -> Result<RunResult, CliError> {
    let result = run_scenario(scenario, method, implicit_dt)?;
    std::fs::create_dir_all(out_dir)?;
    let name = method.name();
    result.write_csv(&out_dir.join(format!("{name}.csv")))?;
    result.stats.write_csv(&out_dir.join(format!("{name}_iterations.csv")))?;
    let mut summary = result.summary_json();
    summary["scenario"] = scenario.name.clone().into();
    summary["t_end"] = scenario.t_end.into();
    std::fs::write(
        out_dir.join(format!("{name}_summary.json")),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    if !result.snapshots.is_empty() {
        let dir = out_dir.join("snapshots");
        std::fs::create_dir_all(&dir)?;
        for snap in &result.snapshots {
            let (nodes, elements) = field_tables(&scenario.problem.mesh, &snap.a)?;
            std::fs::write(dir.join(format!("{name}_nodes_{:06}.csv", snap.step)), nodes)?;
            std::fs::write(dir.join(format!("{name}_elements_{:06}.csv", snap.step)), elements)?;
        }
    }
    Ok(result)
}

/// Runs `jobs` on up to `threads` workers and returns results in job order.
fn run_parallel<T, R, F>(jobs: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    if threads <= 1 || jobs.len() <= 1 {
        return jobs.into_iter().map(f).collect();
    }
    let n = jobs.len();
    let queue = Mutex::new(jobs.into_iter().enumerate().collect::<Vec<_>>());
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.min(n) {
            s.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop();
                let Some((i, job)) = job else { break };
                let r = f(job);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StartvecRow {
    pub strategy: String,
    pub mean_iterations_schur_apply: f64,
    pub mean_iterations_source_term: f64,
    pub mean_iterations_recovery: f64,
    /// Mean over all time-stepping solves.
    pub mean_iterations: f64,
    pub total_iterations: usize,
    pub solves: usize,
    pub wall_time_s: f64,
    /// Probe deviation from the first strategy, relative to its peak.
    pub max_probe_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct StartvecBench {
    pub rows: Vec<StartvecRow>,
    pub results: Vec<RunResult>,
    /// Allowed cross-strategy probe deviation (10 × PCG tolerance).
    pub tolerance: f64,
}

impl StartvecBench {
    pub fn row(&self, strategy: &str) -> Option<&StartvecRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    pub fn max_deviation(&self) -> f64 {
        self.rows.iter().map(|r| r.max_probe_deviation).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,mean_iterations_schur_apply,mean_iterations_source_term,mean_iterations_recovery,\
             mean_iterations,total_iterations,solves,wall_time_s,max_probe_deviation\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.4},{:.4},{:.4},{:.4},{},{},{:.3},{:e}",
                r.strategy,
                r.mean_iterations_schur_apply,
                r.mean_iterations_source_term,
                r.mean_iterations_recovery,
                r.mean_iterations,
                r.total_iterations,
                r.solves,
                r.wall_time_s,
                r.max_probe_deviation
            );
        }
        out
    }
}

/// One explicit run per strategy. The first strategy runs with step control;
/// the others replay its step sizes and `K_cc` update decisions, so all runs
/// see identical `dt`, update times and seeds and differ only in the start
/// vectors of the `K_nn` solves.
pub fn bench_startvec(
    scenario: &Scenario,
    windows: &StrategyWindows,
    strategies: &[String],
    threads: usize,
) -> Result<StartvecBench, CliError> {
    if strategies.is_empty() {
        return Err(CliError::Config("no strategies given".into()));
    }
    let scenarios: Vec<Scenario> = strategies
        .iter()
        .map(|s| scenario.with_strategy(s, windows))
        .collect::<Result<_, _>>()?;
    let baseline = run_explicit(&scenarios[0].problem, scenarios[0].solver.clone(), scenario.t_end)?;
    let replay = baseline.schedule.clone();
    let rest = run_parallel(scenarios[1..].to_vec(), threads, |s| {
        let mut options = s.solver.clone();
        options.replay = Some(replay.clone());
        run_explicit(&s.problem, options, s.t_end)
    });
    let mut results = vec![baseline];
    for r in rest {
        results.push(r?);
    }
    let reference = results[0].probe_values();
    let rows = strategies
        .iter()
        .zip(&results)
        .map(|(name, r)| {
            let st = &r.stats;
            let values = r.probe_values();
            let deviation = if values.len() == reference.len() {
                max_relative_deviation(&values, &reference)
            } else {
                f64::INFINITY
            };
            StartvecRow {
                strategy: name.trim().to_ascii_lowercase(),
                mean_iterations_schur_apply: st.mean_iterations(SolvePurpose::SchurApply),
                mean_iterations_source_term: st.mean_iterations(SolvePurpose::SourceTerm),
                mean_iterations_recovery: st.mean_iterations(SolvePurpose::Recovery),
                mean_iterations: st.mean_stepping_iterations(),
                total_iterations: st.stepping_iterations(),
                solves: st.stepping_solves(),
                wall_time_s: r.wall_time.as_secs_f64(),
                max_probe_deviation: deviation,
            }
        })
        .collect();
    Ok(StartvecBench {
        rows,
        results,
        tolerance: 10.0 * scenario.solver.schur.tol,
    })
}

/// `bench-startvec`: writes `bench_startvec.csv` and fails with
/// [`CliError::Check`] if the strategies disagree beyond 10 × PCG tolerance.
pub fn cmd_bench_startvec(
    scenario: &Scenario,
    windows: &StrategyWindows,
    strategies: &[String],
    out_dir: &Path,
    threads: usize,
) -> Result<StartvecBench, CliError> {
    let bench = bench_startvec(scenario, windows, strategies, threads)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("bench_startvec.csv"), bench.to_csv())?;
    for (row, r) in bench.rows.iter().zip(&bench.results) {
        r.write_csv(&out_dir.join(format!("startvec_{}.csv", row.strategy)))?;
    }
    if !(bench.max_deviation() <= bench.tolerance) {
        return Err(CliError::Check(format!(
            "probe series differ across strategies by {:e} (allowed {:e})",
            bench.max_deviation(),
            bench.tolerance
        )));
    }
    Ok(bench)
}

#[derive(Debug, Clone, Serialize)]
pub struct UpdateRow {
    pub tol: f64,
    pub update_count: usize,
    pub step_count: usize,
    pub wall_time_s: f64,
    /// Probe deviation from the `tol = 0` run, relative to its peak.
    pub max_probe_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct UpdateBench {
    pub rows: Vec<UpdateRow>,
    pub results: Vec<RunResult>,
}

impl UpdateBench {
    pub fn row(&self, tol: f64) -> Option<&UpdateRow> {
        self.rows.iter().find(|r| r.tol == tol)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tol,update_count,step_count,wall_time_s,max_probe_deviation\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:e},{},{},{:.3},{:e}",
                r.tol, r.update_count, r.step_count, r.wall_time_s, r.max_probe_deviation
            );
        }
        out
    }
}

/// One explicit run per update tolerance; `0` (rebuild every step) is added
/// as the baseline if missing.
pub fn bench_update(scenario: &Scenario, tolerances: &[f64], threads: usize) -> Result<UpdateBench, CliError> {
    if let Some(bad) = tolerances.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(CliError::Config(format!("update tolerances must be finite and >= 0, got {bad}")));
    }
    let mut tols = vec![0.0];
    for &t in tolerances {
        if !tols.contains(&t) {
            tols.push(t);
        }
    }
    let results: Vec<RunResult> = run_parallel(tols.clone(), threads, |tol| {
        let mut options = scenario.solver.clone();
        options.tol_update = tol;
        run_explicit(&scenario.problem, options, scenario.t_end)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let baseline = results[0].probe_series();
    let rows = tols
        .iter()
        .zip(&results)
        .map(|(&tol, r)| UpdateRow {
            tol,
            update_count: r.update_count,
            step_count: r.step_count,
            wall_time_s: r.wall_time.as_secs_f64(),
            max_probe_deviation: series_deviation(&baseline, &r.probe_series()),
        })
        .collect();
    Ok(UpdateBench { rows, results })
}

/// `bench-update`: writes `bench_update.csv` and one series per tolerance.
pub fn cmd_bench_update(
    scenario: &Scenario,
    tolerances: &[f64],
    out_dir: &Path,
    threads: usize,
) -> Result<UpdateBench, CliError> {
    let bench = bench_update(scenario, tolerances, threads)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("bench_update.csv"), bench.to_csv())?;
    for (row, r) in bench.rows.iter().zip(&bench.results) {
        r.write_csv(&out_dir.join(format!("update_tol_{:e}.csv", row.tol)))?;
    }
    Ok(bench)
}

#[derive(Debug, Clone, Serialize)]
pub struct CflReport {
    pub lambda_max: f64,
    pub dt_cfl: f64,
    pub safety: f64,
    pub projected_steps: u64,
    pub n_c: usize,
    pub n_n: usize,
    /// Smallest edge length of the mesh.
    pub h: f64,
    /// `max ν / (κ h²)` over the conductors at zero field: an order of
    /// magnitude only, not a bound.
    pub heuristic_lambda: f64,
    pub heuristic_dt: f64,
    pub heuristic_note: &'static str,
}

/// `cfl`: the step-size estimate at the initial state, next to the
/// `1/(h² κ μ)` heuristic.
pub fn cmd_cfl(scenario: &Scenario) -> Result<CflReport, CliError> {
    let mut solver = ExplicitSolver::new(&scenario.problem, scenario.solver.clone())?;
    let dt_cfl = solver.estimate_cfl()?;
    let lambda_max = solver.state().lambda_max.expect("estimate stored");
    let h = scenario.problem.mesh.min_edge_length();
    let heuristic_lambda = scenario
        .problem
        .mesh
        .regions()
        .iter()
        .filter_map(|tag| match tag.kind {
            RegionKind::Conductor(id) => scenario.problem.materials.conductors.get(&id),
            _ => None,
        })
        .map(|m: &MaterialModel| m.nu(0.0).unwrap_or(f64::NAN) / (m.conductivity * h * h))
        .fold(0.0, f64::max);
    Ok(CflReport {
        lambda_max,
        dt_cfl,
        safety: scenario.solver.safety,
        projected_steps: (scenario.t_end / dt_cfl).ceil() as u64,
        n_c: solver.partition().n_c,
        n_n: solver.partition().n_n,
        h,
        heuristic_lambda,
        heuristic_dt: 2.0 / heuristic_lambda,
        heuristic_note: "1/(h^2 kappa mu) scaling only; not a sharp stability bound",
    })
}
