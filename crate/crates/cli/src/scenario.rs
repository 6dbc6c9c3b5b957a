//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected everywhere, so a
//! misspelled tolerance fails loudly instead of silently taking a default.
//! See the repository README for the full schema; the bundled files under
//! `scenarios/` are complete examples.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use mqs_core::assembly::SourceSpec;
use mqs_core::integrate::{MccMode, NewtonOptions, Problem, SolverOptions};
use mqs_core::materials::{MaterialModel, MaterialTable, ReluctivityLaw};
use mqs_core::mesh::{generate_rect_mesh, Mesh2D, RegionTag};
use mqs_core::schur::SchurOptions;
use mqs_core::startvec::{default_cspe_window, default_pod_window, default_tol_pod, StartStrategy};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    t_end: f64,
    probe: u32,
    mesh: MeshSection,
    #[serde(default)]
    materials: MaterialsSection,
    #[serde(default)]
    sources: Vec<SourceSpec>,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    implicit: ImplicitSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshSection {
    /// Mesh file; mutually exclusive with the generator keys.
    file: Option<PathBuf>,
    width: Option<f64>,
    height: Option<f64>,
    nx: Option<usize>,
    ny: Option<usize>,
    /// Integer refinement of `nx` and `ny`.
    #[serde(default = "one")]
    refine: usize,
    #[serde(default)]
    regions: Vec<RegionRect>,
}

fn one() -> usize {
    1
}

/// Axis-aligned box; elements whose centroid lies inside get `tag` and/or the
/// probe overlay. Later boxes override earlier ones.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionRect {
    tag: Option<String>,
    probe: Option<u32>,
    x: [f64; 2],
    y: [f64; 2],
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialsSection {
    air: Option<MaterialSpec>,
    #[serde(default)]
    conductor: BTreeMap<String, MaterialSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialSpec {
    conductivity: f64,
    law: ReluctivityLaw,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    #[serde(default = "default_pcg_tol")]
    pcg_tol: f64,
    #[serde(default = "default_pcg_max_iter")]
    pcg_max_iter: usize,
    #[serde(default = "default_strategy")]
    strategy: String,
    #[serde(default = "default_cspe_window")]
    cspe_window: usize,
    #[serde(default = "default_pod_window")]
    pod_window: usize,
    #[serde(default = "default_tol_pod")]
    tol_pod: f64,
    #[serde(default = "default_tol_update")]
    tol_update: f64,
    #[serde(default = "default_safety")]
    safety: f64,
    #[serde(default = "default_mcc_mode")]
    mcc_mode: MccMode,
    #[serde(default = "default_mcc_tol")]
    mcc_tol: f64,
    #[serde(default = "default_power_tol")]
    power_tol: f64,
    #[serde(default = "default_power_max_iter")]
    power_max_iter: usize,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_true")]
    combined_recovery: bool,
    #[serde(default = "one")]
    output_every: usize,
    snapshot_every: Option<usize>,
    dt_override: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        toml::from_str("").expect("all solver keys have defaults")
    }
}

fn default_pcg_tol() -> f64 {
    1e-6
}
fn default_pcg_max_iter() -> usize {
    10_000
}
fn default_strategy() -> String {
    "cspe".into()
}
fn default_tol_update() -> f64 {
    1e-3
}
fn default_safety() -> f64 {
    0.95
}
fn default_mcc_mode() -> MccMode {
    MccMode::Consistent
}
fn default_mcc_tol() -> f64 {
    1e-10
}
fn default_power_tol() -> f64 {
    1e-6
}
fn default_power_max_iter() -> usize {
    20_000
}
fn default_seed() -> u64 {
    0x5eed
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImplicitSection {
    dt: Option<f64>,
    #[serde(default = "default_newton_tol")]
    newton_tol: f64,
    #[serde(default = "default_max_newton")]
    max_newton: usize,
    #[serde(default = "default_linear_tol")]
    linear_tol: f64,
}

impl Default for ImplicitSection {
    fn default() -> Self {
        toml::from_str("").expect("all implicit keys have defaults")
    }
}

fn default_newton_tol() -> f64 {
    1e-6
}
fn default_max_newton() -> usize {
    50
}
fn default_linear_tol() -> f64 {
    1e-10
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub problem: Problem,
    pub t_end: f64,
    pub solver: SolverOptions,
    /// Default implicit step, if configured.
    pub implicit_dt: Option<f64>,
    pub newton: NewtonOptions,
}

impl Scenario {
    pub fn strategy(&self) -> StartStrategy {
        self.solver.schur.strategy
    }

    /// The same scenario with another start-vector strategy, keeping the
    /// configured window sizes.
    pub fn with_strategy(&self, name: &str, windows: &StrategyWindows) -> Result<Self, CliError> {
        let mut s = self.clone();
        s.solver.schur.strategy = windows.strategy(name)?;
        Ok(s)
    }
}

/// Window settings from the scenario, used to build any strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyWindows {
    pub cspe_window: usize,
    pub pod_window: usize,
    pub tol_pod: f64,
}

impl StrategyWindows {
    pub fn strategy(&self, name: &str) -> Result<StartStrategy, CliError> {
        let s = match name.trim().to_ascii_lowercase().as_str() {
            "previous" => StartStrategy::Previous,
            "cspe" => StartStrategy::Cspe {
                window: self.cspe_window,
            },
            "pod" => StartStrategy::Pod {
                window: self.pod_window,
                tol_pod: self.tol_pod,
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown strategy '{other}' (expected previous, cspe or pod)"
                )))
            }
        };
        s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s)
    }
}

/// Loads and validates a scenario file. Relative mesh paths resolve against
/// the scenario's directory.
pub fn load_scenario(path: &Path) -> Result<(Scenario, StrategyWindows), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let default_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse_scenario(&text, base, &default_name)
        .map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
}

/// Parses scenario text; `base` resolves relative mesh paths.
pub fn parse_scenario(text: &str, base: &Path, default_name: &str) -> Result<(Scenario, StrategyWindows), CliError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let config = |msg: String| CliError::Config(msg);

    if !(file.t_end > 0.0) || !file.t_end.is_finite() {
        return Err(config(format!("t_end must be positive, got {}", file.t_end)));
    }
    let mesh = build_mesh(&file.mesh, base)?;

    let mut materials = MaterialTable::default();
    if let Some(air) = &file.materials.air {
        materials.air = MaterialModel {
            conductivity: air.conductivity,
            law: air.law,
        };
    }
    for (key, spec) in &file.materials.conductor {
        let id: u32 = key
            .parse()
            .map_err(|_| config(format!("materials.conductor.{key}: id must be a nonnegative integer")))?;
        materials.conductors.insert(
            id,
            MaterialModel {
                conductivity: spec.conductivity,
                law: spec.law,
            },
        );
    }
    if file.sources.is_empty() {
        return Err(config("at least one [[sources]] entry is required".into()));
    }

    let s = &file.solver;
    let windows = StrategyWindows {
        cspe_window: s.cspe_window,
        pod_window: s.pod_window,
        tol_pod: s.tol_pod,
    };
    for (name, v) in [
        ("solver.pcg_tol", s.pcg_tol),
        ("solver.tol_pod", s.tol_pod),
        ("solver.safety", s.safety),
        ("solver.mcc_tol", s.mcc_tol),
        ("solver.power_tol", s.power_tol),
        ("implicit.newton_tol", file.implicit.newton_tol),
        ("implicit.linear_tol", file.implicit.linear_tol),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(config(format!("{name} must be positive, got {v}")));
        }
    }
    if !(s.tol_update >= 0.0) {
        return Err(config(format!("solver.tol_update must be >= 0, got {}", s.tol_update)));
    }
    if let Some(dt) = file.implicit.dt {
        if !(dt > 0.0) {
            return Err(config(format!("implicit.dt must be positive, got {dt}")));
        }
    }
    let strategy = windows.strategy(&s.strategy)?;
    let solver = SolverOptions {
        schur: SchurOptions {
            tol: s.pcg_tol,
            max_iter: s.pcg_max_iter,
            strategy,
            combined_recovery: s.combined_recovery,
        },
        tol_update: s.tol_update,
        safety: s.safety,
        mcc_mode: s.mcc_mode,
        mcc_tol: s.mcc_tol,
        power_tol: s.power_tol,
        power_max_iter: s.power_max_iter,
        seed: s.seed,
        dt_override: s.dt_override,
        replay: None,
        output_every: s.output_every,
        snapshot_every: s.snapshot_every,
    };
    solver.validate().map_err(|e| config(e.to_string()))?;

    let problem = Problem {
        mesh,
        materials,
        sources: file.sources.clone(),
        probe: file.probe,
    };
    problem.validate().map_err(|e| config(e.to_string()))?;

    let scenario = Scenario {
        name: file.name.clone().unwrap_or_else(|| default_name.to_string()),
        problem,
        t_end: file.t_end,
        solver,
        implicit_dt: file.implicit.dt,
        newton: NewtonOptions {
            tol: file.implicit.newton_tol,
            max_iter: file.implicit.max_newton,
            linear_tol: file.implicit.linear_tol,
        },
    };
    Ok((scenario, windows))
}

fn build_mesh(section: &MeshSection, base: &Path) -> Result<Mesh2D, CliError> {
    let generator = [
        section.width.is_some(),
        section.height.is_some(),
        section.nx.is_some(),
        section.ny.is_some(),
    ];
    if let Some(file) = &section.file {
        if generator.iter().any(|&g| g) || !section.regions.is_empty() || section.refine != 1 {
            return Err(CliError::Config(
                "mesh.file cannot be combined with generator keys (width, height, nx, ny, refine, regions)".into(),
            ));
        }
        let path = if file.is_absolute() { file.clone() } else { base.join(file) };
        return Mesh2D::load(&path).map_err(|e| CliError::Config(format!("mesh {}: {e}", path.display())));
    }
    let (Some(width), Some(height), Some(nx), Some(ny)) = (section.width, section.height, section.nx, section.ny) else {
        return Err(CliError::Config(
            "mesh needs either `file` or all of `width`, `height`, `nx`, `ny`".into(),
        ));
    };
    if section.refine == 0 {
        return Err(CliError::Config("mesh.refine must be at least 1".into()));
    }
    let mut rects = Vec::with_capacity(section.regions.len());
    for (i, r) in section.regions.iter().enumerate() {
        let tag = match &r.tag {
            Some(t) => Some(
                t.parse::<RegionTag>()
                    .map_err(|e| CliError::Config(format!("mesh.regions[{i}].tag: {e}")))?,
            ),
            None => None,
        };
        if tag.is_none() && r.probe.is_none() {
            return Err(CliError::Config(format!("mesh.regions[{i}] needs `tag` or `probe`")));
        }
        if !(r.x[0] < r.x[1] && r.y[0] < r.y[1]) {
            return Err(CliError::Config(format!("mesh.regions[{i}]: empty box")));
        }
        rects.push((tag, r.probe, r.x, r.y));
    }
    let region_fn = |c: [f64; 2]| {
        let mut tag = RegionTag::AIR;
        for (t, probe, x, y) in &rects {
            if c[0] >= x[0] && c[0] <= x[1] && c[1] >= y[0] && c[1] <= y[1] {
                if let Some(t) = t {
                    let keep = tag.probe;
                    tag = *t;
                    if tag.probe.is_none() {
                        tag.probe = keep;
                    }
                }
                if let Some(p) = probe {
                    tag.probe = Some(*p);
                }
            }
        }
        tag
    };
    generate_rect_mesh(width, height, nx * section.refine, ny * section.refine, region_fn)
        .map_err(|e| CliError::Config(format!("mesh: {e}")))
}
