use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mqs_cli::{cmd_bench_startvec, cmd_bench_update, cmd_cfl, cmd_run, load_scenario, CliError, Scenario, StrategyWindows};
use mqs_core::integrate::Method;

/// Semi-explicit eddy current solver and benchmark harness.
#[derive(Debug, Parser)]
#[command(name = "mqs", version, about)]
struct Cli {
    /// Overrides the scenario's power-iteration seed.
    #[arg(long, global = true, env = "MQS_SEED")]
    seed: Option<u64>,

    /// Worker threads for the bench commands (each run stays single-threaded).
    #[arg(long, global = true, env = "MQS_THREADS", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Explicit,
    Implicit,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write its time series and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "explicit")]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
        /// Implicit step size (defaults to the scenario's, else t_end/100).
        #[arg(long)]
        dt: Option<f64>,
        /// Forces a fixed explicit step, bypassing step control.
        #[arg(long)]
        dt_override: Option<f64>,
    },
    /// Compare PCG start-vector strategies at identical step sizes.
    BenchStartvec {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "previous,cspe,pod")]
        strategies: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare selective K_cc update tolerances against updating every step.
    BenchUpdate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1e-4,1e-3,1e-2")]
        tols: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the explicit stability limit of a scenario.
    Cfl {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<(Scenario, StrategyWindows), CliError> {
    let (mut scenario, windows) = load_scenario(path)?;
    if let Some(seed) = seed {
        scenario.solver.seed = seed;
    }
    Ok((scenario, windows))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::Config("thread count must be at least 1".into()));
    }
    match cli.command {
        Command::Run {
            config,
            method,
            out,
            dt,
            dt_override,
        } => {
            let (mut scenario, _) = load(&config, cli.seed)?;
            if let Some(dt) = dt_override {
                if !(dt > 0.0) {
                    return Err(CliError::Config(format!("--dt-override must be positive, got {dt}")));
                }
                scenario.solver.dt_override = Some(dt);
            }
            let method = match method {
                MethodArg::Explicit => Method::Explicit,
                MethodArg::Implicit => Method::Implicit,
            };
            let result = cmd_run(&scenario, method, &out, dt)?;
            let counted = match method {
                Method::Explicit => "K_cc updates",
                Method::Implicit => "Newton iterations",
            };
            println!(
                "{} run of '{}': {} steps, {} {counted}, {} PCG iterations, final probe |B| = {:.6e} T ({:.2} s)",
                method.name(),
                scenario.name,
                result.step_count,
                result.update_count,
                result.stats.stepping_iterations(),
                result.samples.last().map_or(0.0, |s| s.probe_b),
                result.wall_time.as_secs_f64()
            );
        }
        Command::BenchStartvec { config, strategies, out } => {
            let (scenario, windows) = load(&config, cli.seed)?;
            let bench = cmd_bench_startvec(&scenario, &windows, &strategies, &out, cli.threads)?;
            print!("{}", bench.to_csv());
        }
        Command::BenchUpdate { config, tols, out } => {
            let (scenario, _) = load(&config, cli.seed)?;
            let bench = cmd_bench_update(&scenario, &tols, &out, cli.threads)?;
            print!("{}", bench.to_csv());
        }
        Command::Cfl { config } => {
            let (scenario, _) = load(&config, cli.seed)?;
            let report = cmd_cfl(&scenario)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
