use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::assembly::compute_b2;
use crate::mesh::{centroid, Mesh2D};
use crate::schur::{IterationStats, SolvePurpose};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Explicit,
    Implicit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Explicit => "explicit",
            Method::Implicit => "implicit",
        }
    }
}

/// Step size and update decision of one step, enough to replay a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub dt: f64,
    /// Whether `K_cc` was rebuilt before this step.
    pub updated: bool,
}

/// One output row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub probe_b: f64,
    pub dt: f64,
    /// Time-stepping PCG iterations so far; step-size estimates are excluded.
    pub cumulative_pcg_iterations: usize,
    pub update_count: usize,
    /// `‖K_cnᵀ a_c + K_nn a_n - j_sn‖ / ‖j_sn‖` after the step (explicit only).
    pub dae_residual: f64,
}

/// Nodal potential (all nodes, Dirichlet zeros included) at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub samples: Vec<Sample>,
    pub stats: IterationStats,
    pub update_count: usize,
    pub step_count: usize,
    pub wall_time: Duration,
    /// Last spectral estimate used for step control.
    pub lambda_max: Option<f64>,
    pub initial_dt: f64,
    pub final_dt: f64,
    pub schedule: Vec<StepRecord>,
    pub max_dae_residual: f64,
    pub newton_iterations: usize,
    pub snapshots: Vec<Snapshot>,
}

impl RunResult {
    pub const CSV_HEADER: &'static str = "t,probe_avg_B,dt,cumulative_pcg_iterations,update_count";

    /// Time series CSV. Wall time is left out so that identical runs give
    /// identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{},{}",
                s.t, s.probe_b, s.dt, s.cumulative_pcg_iterations, s.update_count
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn probe_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.probe_b)).collect()
    }

    pub fn probe_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.probe_b).collect()
    }

    pub fn total_pcg_iterations(&self) -> usize {
        self.stats.total_iterations()
    }

    /// Run summary as JSON. Contains the wall time, so it is not
    /// reproducible byte for byte.
    pub fn summary_json(&self) -> serde_json::Value {
        let per_purpose: serde_json::Map<String, serde_json::Value> = SolvePurpose::ALL
            .iter()
            .map(|&p| {
                (
                    p.name().to_string(),
                    serde_json::json!({
                        "solves": self.stats.solves(p),
                        "iterations": self.stats.iterations(p),
                        "mean_iterations": self.stats.mean_iterations(p),
                    }),
                )
            })
            .collect();
        serde_json::json!({
            "method": self.method.name(),
            "strategy": self.stats.strategy,
            "step_count": self.step_count,
            "update_count": self.update_count,
            "initial_dt": self.initial_dt,
            "final_dt": self.final_dt,
            "lambda_max": self.lambda_max,
            "total_pcg_iterations": self.stats.total_iterations(),
            "stepping_pcg_iterations": self.stats.stepping_iterations(),
            "mean_pcg_iterations_per_solve": self.stats.mean_stepping_iterations(),
            "newton_iterations": self.newton_iterations,
            "max_dae_residual": self.max_dae_residual,
            "final_probe_b": self.samples.last().map(|s| s.probe_b),
            "wall_time_s": self.wall_time.as_secs_f64(),
            "solves": per_purpose,
        })
    }
}

/// `max |a_i - b_i| / max |b_i|` over equal-length series: the deviation
/// relative to the peak of the reference `b`.
pub fn max_relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "series lengths differ");
    let peak = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dev = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if peak == 0.0 {
        if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        dev / peak
    }
}

/// Like [`max_relative_deviation`] for series on different time grids:
/// `other` is interpolated linearly at the times of `reference` that fall
/// inside its range.
pub fn series_deviation(reference: &[(f64, f64)], other: &[(f64, f64)]) -> f64 {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &(t, v) in reference {
        if let Some(w) = interpolate(other, t) {
            a.push(w);
            b.push(v);
        }
    }
    if b.is_empty() {
        return f64::INFINITY;
    }
    max_relative_deviation(&a, &b)
}

fn interpolate(series: &[(f64, f64)], t: f64) -> Option<f64> {
    let first = series.first()?;
    let last = series.last()?;
    let slack = 1e-9 * last.0.abs().max(1e-300);
    if t < first.0 - slack || t > last.0 + slack {
        return None;
    }
    let k = series.partition_point(|&(s, _)| s < t);
    if k == 0 {
        return Some(first.1);
    }
    if k == series.len() {
        return Some(last.1);
    }
    let (t0, v0) = series[k - 1];
    let (t1, v1) = series[k];
    if t1 == t0 {
        return Some(v1);
    }
    Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
}

/// Field dump for external plotting: a node table `node,x,y,a` and an
/// element table `element,cx,cy,b`.
pub fn field_tables(mesh: &Mesh2D, a: &[f64]) -> Result<(String, String)> {
    let mut nodes = String::from("node,x,y,a\n");
    for (i, (p, v)) in mesh.nodes().iter().zip(a).enumerate() {
        let _ = writeln!(nodes, "{i},{:e},{:e},{:e}", p[0], p[1], v);
    }
    let b2 = compute_b2(mesh, a)?;
    let mut elements = String::from("element,cx,cy,b\n");
    for (e, b2) in b2.iter().enumerate() {
        let c = centroid(&mesh.element_coords(e));
        let _ = writeln!(elements, "{e},{:e},{:e},{:e}", c[0], c[1], b2.sqrt());
    }
    Ok((nodes, elements))
}
