//! Matrix-free Schur complement `K_S = K_cn K_nn⁺ K_cnᵀ` and the `K_nn`
//! solve service behind it.
//!
//! Every `K_nn` solve goes through [`SchurContext::solve_knn`], which picks a
//! start vector from the history of the same purpose and records the PCG
//! iteration count.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{ic0_preconditioner, jacobi_preconditioner, pcg, sub, CsrMatrix, Ic0, Jacobi, Preconditioner};
use crate::startvec::{StartStrategy, StartVectorSlot};
use crate::{Error, Result};

/// What a `K_nn` solve is for. Each purpose keeps its own start-vector
/// history, since only solutions of one right-hand-side family extrapolate
/// well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvePurpose {
    /// `K_nn⁺ K_cnᵀ a_c` inside a Schur complement product.
    SchurApply,
    /// `K_nn⁺ j_sn` for the source term.
    SourceTerm,
    /// Recovery of `a_n` from `a_c`.
    Recovery,
    /// Schur products inside step-size estimation. Always warm-started from
    /// the previous solve, whatever the configured strategy, so that the
    /// estimate does not depend on it.
    Spectral,
}

impl SolvePurpose {
    pub const ALL: [SolvePurpose; 4] = [
        SolvePurpose::SchurApply,
        SolvePurpose::SourceTerm,
        SolvePurpose::Recovery,
        SolvePurpose::Spectral,
    ];

    /// Purposes that belong to time stepping proper.
    pub const STEPPING: [SolvePurpose; 3] = [SolvePurpose::SchurApply, SolvePurpose::SourceTerm, SolvePurpose::Recovery];

    pub fn name(self) -> &'static str {
        match self {
            SolvePurpose::SchurApply => "schur_apply",
            SolvePurpose::SourceTerm => "source_term",
            SolvePurpose::Recovery => "recovery",
            SolvePurpose::Spectral => "spectral",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub step: usize,
    pub purpose: SolvePurpose,
    pub iterations: usize,
    pub residual: f64,
}

/// Per-solve PCG records of one run.
#[derive(Debug, Clone, Default)]
pub struct IterationStats {
    pub strategy: String,
    pub records: Vec<SolveRecord>,
}

impl IterationStats {
    pub fn solves(&self, purpose: SolvePurpose) -> usize {
        self.records.iter().filter(|r| r.purpose == purpose).count()
    }

    pub fn iterations(&self, purpose: SolvePurpose) -> usize {
        self.records.iter().filter(|r| r.purpose == purpose).map(|r| r.iterations).sum()
    }

    /// Mean iterations per solve of one purpose; 0 without solves.
    pub fn mean_iterations(&self, purpose: SolvePurpose) -> f64 {
        mean(self.iterations(purpose), self.solves(purpose))
    }

    /// Iterations over all time-stepping solves (step-size estimation
    /// excluded).
    pub fn stepping_iterations(&self) -> usize {
        SolvePurpose::STEPPING.iter().map(|&p| self.iterations(p)).sum()
    }

    pub fn stepping_solves(&self) -> usize {
        SolvePurpose::STEPPING.iter().map(|&p| self.solves(p)).sum()
    }

    /// Mean iterations per time-stepping solve.
    pub fn mean_stepping_iterations(&self) -> f64 {
        mean(self.stepping_iterations(), self.stepping_solves())
    }

    pub fn total_iterations(&self) -> usize {
        self.records.iter().map(|r| r.iterations).sum()
    }

    /// CSV with columns `step,purpose,strategy,iterations,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,purpose,strategy,iterations,residual\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{:e}",
                r.step,
                r.purpose.name(),
                self.strategy,
                r.iterations,
                r.residual
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn mean(total: usize, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        total as f64 / count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurOptions {
    /// Relative residual tolerance of every `K_nn` solve.
    pub tol: f64,
    pub max_iter: usize,
    pub strategy: StartStrategy,
    /// Recover `a_n` with one solve on `j_sn - K_cnᵀ a_c` (true) or with
    /// two separate solves (false).
    pub combined_recovery: bool,
}

impl Default for SchurOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 10_000,
            strategy: StartStrategy::Previous,
            combined_recovery: true,
        }
    }
}

/// `K_nn` preconditioner: IC(0), or Jacobi when IC(0) hits a bad pivot.
#[derive(Debug, Clone)]
pub enum KnnPreconditioner {
    Ic0(Ic0),
    Jacobi(Jacobi),
}

impl KnnPreconditioner {
    pub fn build(k_nn: &CsrMatrix) -> Result<Self> {
        match ic0_preconditioner(k_nn) {
            Ok(ic) => Ok(KnnPreconditioner::Ic0(ic)),
            Err(Error::NonPositivePivot { .. }) => Ok(KnnPreconditioner::Jacobi(jacobi_preconditioner(k_nn)?)),
            Err(e) => Err(e),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KnnPreconditioner::Ic0(_) => "ic0",
            KnnPreconditioner::Jacobi(_) => "jacobi",
        }
    }
}

impl Preconditioner for KnnPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            KnnPreconditioner::Ic0(p) => p.apply(r, z),
            KnnPreconditioner::Jacobi(p) => p.apply(r, z),
        }
    }
}

/// Owns the constant blocks `K_cn`, `K_nn`, the `K_nn` preconditioner (built
/// once) and the start-vector histories.
#[derive(Debug, Clone)]
pub struct SchurContext {
    k_cn: CsrMatrix,
    k_nn: CsrMatrix,
    precond: KnnPreconditioner,
    options: SchurOptions,
    slots: Vec<StartVectorSlot>,
    stats: IterationStats,
    step: usize,
}

impl SchurContext {
    pub fn new(k_cn: CsrMatrix, k_nn: CsrMatrix, options: SchurOptions) -> Result<Self> {
        options.strategy.validate()?;
        if !(options.tol > 0.0) || options.max_iter == 0 {
            return Err(Error::InvalidArgument(format!(
                "PCG needs tol > 0 and max_iter > 0, got {} and {}",
                options.tol, options.max_iter
            )));
        }
        if k_nn.nrows() != k_nn.ncols() || k_cn.ncols() != k_nn.nrows() {
            return Err(Error::DimensionMismatch {
                context: "K_cn columns vs K_nn",
                expected: k_nn.nrows(),
                found: k_cn.ncols(),
            });
        }
        let precond = KnnPreconditioner::build(&k_nn)?;
        let slots = SolvePurpose::ALL
            .iter()
            .map(|p| match p {
                SolvePurpose::Spectral => StartVectorSlot::new(&StartStrategy::Previous),
                _ => StartVectorSlot::new(&options.strategy),
            })
            .collect();
        Ok(Self {
            k_cn,
            k_nn,
            precond,
            stats: IterationStats {
                strategy: options.strategy.name().to_string(),
                records: Vec::new(),
            },
            options,
            slots,
            step: 0,
        })
    }

    pub fn n_c(&self) -> usize {
        self.k_cn.nrows()
    }

    pub fn n_n(&self) -> usize {
        self.k_nn.nrows()
    }

    pub fn k_cn(&self) -> &CsrMatrix {
        &self.k_cn
    }

    pub fn k_nn(&self) -> &CsrMatrix {
        &self.k_nn
    }

    pub fn options(&self) -> &SchurOptions {
        &self.options
    }

    pub fn preconditioner(&self) -> &KnnPreconditioner {
        &self.precond
    }

    pub fn stats(&self) -> &IterationStats {
        &self.stats
    }

    pub fn into_stats(self) -> IterationStats {
        self.stats
    }

    /// Step index attached to subsequent solve records.
    pub fn set_step(&mut self, step: usize) {
        self.step = step;
    }

    /// `K_nn⁺ rhs` by PCG from the purpose's start vector. The solution is
    /// then added to that purpose's history.
    pub fn solve_knn(&mut self, rhs: &[f64], purpose: SolvePurpose) -> Result<Vec<f64>> {
        let n = self.n_n();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                context: "solve_knn rhs",
                expected: n,
                found: rhs.len(),
            });
        }
        let slot = &mut self.slots[purpose.index()];
        let x0 = slot.start(rhs)?;
        let report = pcg(&mut &self.k_nn, rhs, &x0, &self.precond, self.options.tol, self.options.max_iter)?;
        self.stats.records.push(SolveRecord {
            step: self.step,
            purpose,
            iterations: report.iterations,
            residual: report.final_relative_residual,
        });
        if !report.converged {
            return Err(Error::NotConverged {
                iterations: report.iterations,
                residual: report.final_relative_residual,
            });
        }
        slot.record(&report.solution, &self.k_nn)?;
        Ok(report.solution)
    }

    /// `K_S a_c = K_cn K_nn⁺ K_cnᵀ a_c`.
    pub fn apply_ks(&mut self, a_c: &[f64]) -> Result<Vec<f64>> {
        self.apply_ks_for(a_c, SolvePurpose::SchurApply)
    }

    /// [`apply_ks`](Self::apply_ks) with the inner solve filed under `purpose`.
    pub fn apply_ks_for(&mut self, a_c: &[f64], purpose: SolvePurpose) -> Result<Vec<f64>> {
        let rhs = self.k_cn.spmv_transpose(a_c)?;
        let y = self.solve_knn(&rhs, purpose)?;
        self.k_cn.spmv(&y)
    }

    /// `-K_cn K_nn⁺ j_sn`.
    pub fn schur_rhs(&mut self, j_sn: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_knn(j_sn, SolvePurpose::SourceTerm)?;
        let mut out = self.k_cn.spmv(&y)?;
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(out)
    }

    /// `a_n = K_nn⁺ j_sn - K_nn⁺ K_cnᵀ a_c`.
    pub fn recover_an(&mut self, a_c: &[f64], j_sn: &[f64]) -> Result<Vec<f64>> {
        let coupling = self.k_cn.spmv_transpose(a_c)?;
        if self.options.combined_recovery {
            let rhs = sub(j_sn, &coupling);
            self.solve_knn(&rhs, SolvePurpose::Recovery)
        } else {
            let source = self.solve_knn(j_sn, SolvePurpose::SourceTerm)?;
            let coupled = self.solve_knn(&coupling, SolvePurpose::SchurApply)?;
            Ok(sub(&source, &coupled))
        }
    }
}
