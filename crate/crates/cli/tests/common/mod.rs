#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mqs_cli::{parse_scenario, Scenario, StrategyWindows};

/// A 10x10 scenario with one saturable block: a few hundred explicit steps.
pub const TINY: &str = r#"
name = "tiny"
t_end = 2e-3
probe = 0

[mesh]
width = 0.1
height = 0.1
nx = 10
ny = 10

[[mesh.regions]]
tag = "conductor:0"
x = [0.03, 0.07]
y = [0.02, 0.05]

[[mesh.regions]]
probe = 0
x = [0.03, 0.07]
y = [0.05, 0.06]

[[mesh.regions]]
tag = "coil:0"
x = [0.02, 0.08]
y = [0.07, 0.08]

[materials.conductor.0]
conductivity = 1e6
law = { kind = "brauer", k1 = 200.0, k2 = 5.0, k3 = 3.0 }

[[sources]]
coil = 0
turns = 10
i_max = 2000.0
tau = 1e-3
"#;

pub fn tiny() -> (Scenario, StrategyWindows) {
    parse_scenario(TINY, Path::new("."), "tiny").unwrap()
}

/// `TINY` with `extra` appended (e.g. a `[solver]` table).
pub fn tiny_with(extra: &str) -> (Scenario, StrategyWindows) {
    parse_scenario(&format!("{TINY}\n{extra}"), Path::new("."), "tiny").unwrap()
}

pub fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}
