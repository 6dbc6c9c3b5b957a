//! Scenario loading, run orchestration and the benchmark harness behind the
//! `mqs` binary.

pub mod commands;
pub mod scenario;

pub use commands::{
    bench_startvec, bench_update, cmd_bench_startvec, cmd_bench_update, cmd_cfl, cmd_run, run_scenario, CflReport,
    StartvecBench, StartvecRow, UpdateBench, UpdateRow,
};
pub use scenario::{load_scenario, parse_scenario, Scenario, StrategyWindows};

/// Errors surfaced by the command layer, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(#[from] mqs_core::Error),

    #[error("benchmark check failed: {0}")]
    Check(String),

    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
}

pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const OUTPUT: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const INSTABILITY: i32 = 4;
    pub const CHECK: i32 = 5;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit_code::CONFIG,
            CliError::Solver(mqs_core::Error::Instability { .. }) => exit_code::INSTABILITY,
            CliError::Solver(_) => exit_code::SOLVER,
            CliError::Check(_) => exit_code::CHECK,
            CliError::Output(_) => exit_code::OUTPUT,
        }
    }
}
