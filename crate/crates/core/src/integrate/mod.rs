//! Time integration.
//!
//! The explicit path eliminates the nonconducting unknowns through the Schur
//! complement and advances the conducting ones with forward Euler:
//!
//! ```text
//! a_c += dt M_cc⁻¹ [ -K_cn K_nn⁺ j_sn - (K_cc - K_S) a_c ]
//! a_n  = K_nn⁺ (j_sn - K_cnᵀ a_c)
//! ```
//!
//! `K_cc` is only rebuilt when the conducting state has moved by more than
//! a relative tolerance since the last rebuild, and the step is limited by
//! `2 / λ_max(M_cc⁻¹ (K_cc - K_S))`.
//!
//! The implicit path ([`run_implicit`]) solves the full system with backward
//! Euler and Newton's method and serves as the accuracy reference.

mod newton;
mod result;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use newton::{newton_solve, run_implicit, ImplicitOptions, ImplicitSystem, NewtonOptions, NewtonReport};
pub use result::{field_tables, max_relative_deviation, series_deviation, Method, RunResult, Sample, Snapshot, StepRecord};

use crate::assembly::{
    assemble_blocks, assemble_source, check_sources, compute_b2, partition, probe_average_b, DofPartition, KccAssembler,
    SourceSpec,
};
use crate::linalg::{
    axpy, jacobi_preconditioner, norm2, pcg, power_iteration, sub, CsrMatrix, FnOperator, Jacobi, PowerOptions,
};
use crate::materials::MaterialTable;
use crate::mesh::Mesh2D;
use crate::schur::{SchurContext, SchurOptions, SolvePurpose};
use crate::{Error, Result};

/// Everything that defines the physics of a run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh2D,
    pub materials: MaterialTable,
    pub sources: Vec<SourceSpec>,
    /// Probe overlay id whose average `|B|` is recorded.
    pub probe: u32,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.materials.validate_for(&self.mesh)?;
        let p = partition(&self.mesh);
        check_sources(&self.mesh, &self.sources, &p)?;
        if !self.mesh.regions().iter().any(|r| r.probe == Some(self.probe)) {
            return Err(Error::InvalidArgument(format!("probe:{} has no elements", self.probe)));
        }
        Ok(())
    }

    /// Average `|B|` over the probe for a full nodal potential.
    pub fn probe_value(&self, a_full: &[f64]) -> Result<f64> {
        let b2 = compute_b2(&self.mesh, a_full)?;
        probe_average_b(&self.mesh, &b2, self.probe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MccMode {
    /// PCG with Jacobi preconditioning on the consistent mass matrix.
    Consistent,
    /// Row-sum lumped diagonal.
    Lumped,
}

/// Applies `M_cc⁻¹`.
#[derive(Debug, Clone)]
pub struct MccSolver {
    mode: MccMode,
    m: CsrMatrix,
    lumped: CsrMatrix,
    jacobi: Jacobi,
    tol: f64,
}

impl MccSolver {
    pub fn new(m_cc: CsrMatrix, mode: MccMode, tol: f64) -> Result<Self> {
        let n = m_cc.nrows();
        let sums: Vec<f64> = (0..n).map(|i| m_cc.row(i).1.iter().sum()).collect();
        if let Some((row, &value)) = sums.iter().enumerate().find(|(_, &s)| !(s > 0.0)) {
            return Err(Error::NonPositivePivot { index: row, value });
        }
        Ok(Self {
            mode,
            jacobi: jacobi_preconditioner(&m_cc)?,
            lumped: CsrMatrix::from_diagonal(&sums),
            m: m_cc,
            tol,
        })
    }

    pub fn mode(&self) -> MccMode {
        self.mode
    }

    /// The mass matrix actually inverted (consistent or lumped).
    pub fn metric(&self) -> &CsrMatrix {
        match self.mode {
            MccMode::Consistent => &self.m,
            MccMode::Lumped => &self.lumped,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            MccMode::Lumped => {
                let d = self.lumped.values();
                Ok(b.iter().zip(d).map(|(x, m)| x / m).collect())
            }
            MccMode::Consistent => {
                let n = b.len();
                let rep = pcg(&mut &self.m, b, &vec![0.0; n], &self.jacobi, self.tol, 10 * n + 100)?;
                if !rep.converged {
                    return Err(Error::NotConverged {
                        iterations: rep.iterations,
                        residual: rep.final_relative_residual,
                    });
                }
                Ok(rep.solution)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub schur: SchurOptions,
    /// Relative change of `a_c` that triggers a `K_cc` rebuild.
    pub tol_update: f64,
    /// Fraction of the stability limit `2 / λ_max` used as step.
    pub safety: f64,
    pub mcc_mode: MccMode,
    pub mcc_tol: f64,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub seed: u64,
    /// Fixed step size; disables step control.
    pub dt_override: Option<f64>,
    /// Step sizes and update decisions of an earlier run to repeat exactly.
    pub replay: Option<Vec<StepRecord>>,
    /// Record a sample every this many steps (the last step is always kept).
    pub output_every: usize,
    pub snapshot_every: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            schur: SchurOptions::default(),
            tol_update: 1e-3,
            safety: 0.95,
            mcc_mode: MccMode::Consistent,
            mcc_tol: 1e-10,
            power_tol: 1e-6,
            power_max_iter: 20_000,
            seed: 0x5eed,
            dt_override: None,
            replay: None,
            output_every: 1,
            snapshot_every: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("safety", self.safety),
            ("mcc_tol", self.mcc_tol),
            ("power_tol", self.power_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tol_update >= 0.0) {
            return Err(Error::InvalidArgument(format!("tol_update must be >= 0, got {}", self.tol_update)));
        }
        if let Some(dt) = self.dt_override {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::InvalidArgument(format!("dt override must be positive, got {dt}")));
            }
        }
        if self.output_every == 0 || self.snapshot_every == Some(0) {
            return Err(Error::InvalidArgument("output intervals must be at least 1".into()));
        }
        Ok(())
    }
}

/// Power-iteration settings for the step-size estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflOptions {
    pub power_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub safety: f64,
}

/// Time-stepper state.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub t: f64,
    pub step: usize,
    pub a_c: Vec<f64>,
    pub a_n: Vec<f64>,
    /// `a_c` at the last `K_cc` rebuild.
    pub a_c_last_update: Vec<f64>,
    /// `K_cc(a_c_last_update)`.
    pub k_cc: CsrMatrix,
    /// Number of `K_cc` assemblies, including the initial one.
    pub update_count: usize,
    pub dt: f64,
    /// Estimate for the current `K_cc`; `None` after a rebuild.
    pub lambda_max: Option<f64>,
    /// Last dominant eigenvector, reused as power-iteration start.
    pub eigvec: Option<Vec<f64>>,
    growth_streak: usize,
    last_increment: Option<Vec<f64>>,
}

impl SolverState {
    pub fn new(k_cc: CsrMatrix, n_n: usize) -> Self {
        let n_c = k_cc.nrows();
        Self {
            t: 0.0,
            step: 0,
            a_c: vec![0.0; n_c],
            a_n: vec![0.0; n_n],
            a_c_last_update: vec![0.0; n_c],
            k_cc,
            update_count: 1,
            dt: f64::NAN,
            lambda_max: None,
            eigvec: None,
            growth_streak: 0,
            last_increment: None,
        }
    }
}

/// Consecutive growing, sign-alternating increments that count as unstable.
const GROWTH_STREAK_LIMIT: usize = 12;

/// Dominant eigenvalue of `M_cc⁻¹ (K_cc - K_S)` by power iteration in the
/// `M_cc` inner product; stores it in `state` and returns
/// `safety · 2 / λ_max`.
pub fn estimate_cfl(state: &mut SolverState, schur: &mut SchurContext, mcc: &MccSolver, opts: &CflOptions) -> Result<f64> {
    let n_c = state.k_cc.nrows();
    if n_c == 0 {
        return Err(Error::InvalidArgument("no conducting unknowns: nothing to integrate".into()));
    }
    let k_cc = &state.k_cc;
    let mut op = FnOperator::new(n_c, |x: &[f64], y: &mut [f64]| {
        let kx = k_cc.spmv(x)?;
        let ks = schur.apply_ks_for(x, SolvePurpose::Spectral)?;
        y.copy_from_slice(&mcc.solve(&sub(&kx, &ks))?);
        Ok(())
    });
    let report = power_iteration(
        &mut op,
        Some(mcc.metric()),
        &PowerOptions {
            tol: opts.power_tol,
            max_iter: opts.max_iter,
            seed: opts.seed,
            start: state.eigvec.clone(),
        },
    )?;
    if !report.converged {
        return Err(Error::PowerIteration(format!(
            "no convergence in {} iterations (last estimate {:e})",
            report.iterations, report.lambda
        )));
    }
    if !(report.lambda > 0.0) {
        return Err(Error::PowerIteration(format!("nonpositive eigenvalue estimate {:e}", report.lambda)));
    }
    state.lambda_max = Some(report.lambda);
    state.eigvec = Some(report.vector);
    Ok(opts.safety * 2.0 / report.lambda)
}

/// One forward Euler step to `t + dt` with `j_sn` evaluated at `t + dt`.
///
/// Uses `state.k_cc` as is; rebuilding it is [`maybe_update_kcc`]'s job.
pub fn explicit_step(state: &mut SolverState, schur: &mut SchurContext, mcc: &MccSolver, j_sn: &[f64]) -> Result<()> {
    let dt = state.dt;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    let mut bracket = schur.schur_rhs(j_sn)?;
    let kx = state.k_cc.spmv(&state.a_c)?;
    let ks = schur.apply_ks(&state.a_c)?;
    axpy(-1.0, &kx, &mut bracket);
    axpy(1.0, &ks, &mut bracket);
    if bracket.iter().any(|v| !v.is_finite()) {
        return Err(Error::Instability {
            t: state.t,
            dt,
            detail: "non-finite time derivative".into(),
        });
    }
    let mut increment = mcc.solve(&bracket)?;
    increment.iter_mut().for_each(|v| *v *= dt);

    if increment.iter().any(|v| !v.is_finite()) {
        return Err(Error::Instability {
            t: state.t,
            dt,
            detail: "non-finite conducting state".into(),
        });
    }
    check_growth(state, &increment)?;
    axpy(1.0, &increment, &mut state.a_c);
    state.a_n = schur.recover_an(&state.a_c, j_sn)?;
    state.t += dt;
    state.step += 1;
    state.last_increment = Some(increment);
    Ok(())
}

/// Flags the explicit-Euler blow-up signature: increments that grow while
/// flipping direction, step after step.
fn check_growth(state: &mut SolverState, increment: &[f64]) -> Result<()> {
    if let Some(prev) = &state.last_increment {
        let flips = crate::linalg::dot(prev, increment) < 0.0;
        if flips && norm2(increment) > norm2(prev) {
            state.growth_streak += 1;
        } else {
            state.growth_streak = 0;
        }
    }
    if state.growth_streak >= GROWTH_STREAK_LIMIT {
        return Err(Error::Instability {
            t: state.t,
            dt: state.dt,
            detail: format!(
                "conducting state increments grew with alternating sign for {} consecutive steps",
                state.growth_streak
            ),
        });
    }
    Ok(())
}

/// Rebuilds `K_cc` at the current `a_c` and makes it the new reference state.
pub fn update_kcc(state: &mut SolverState, mesh: &Mesh2D, materials: &MaterialTable, kcc: &KccAssembler) -> Result<()> {
    let (k_cc, _) = kcc.assemble(mesh, materials, &state.a_c)?;
    if k_cc.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Instability {
            t: state.t,
            dt: state.dt,
            detail: "reluctivity overflowed while rebuilding K_cc".into(),
        });
    }
    state.k_cc = k_cc;
    state.a_c_last_update.clone_from(&state.a_c);
    state.update_count += 1;
    state.lambda_max = None;
    Ok(())
}

/// Whether `‖a_c - a_c^l‖ / ‖a_c^l‖ > tol`. A zero reference state
/// triggers as soon as `a_c` is nonzero.
pub fn update_needed(a_c: &[f64], a_c_last: &[f64], tol: f64) -> bool {
    let reference = norm2(a_c_last);
    if reference == 0.0 {
        return norm2(a_c) > 0.0;
    }
    norm2(&sub(a_c, a_c_last)) / reference > tol
}

/// Rebuilds `K_cc` if [`update_needed`]; returns whether it did.
pub fn maybe_update_kcc(
    state: &mut SolverState,
    mesh: &Mesh2D,
    materials: &MaterialTable,
    kcc: &KccAssembler,
    tol_update: f64,
) -> Result<bool> {
    if update_needed(&state.a_c, &state.a_c_last_update, tol_update) {
        update_kcc(state, mesh, materials, kcc)?;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// `‖K_cnᵀ a_c + K_nn a_n - j_sn‖ / ‖j_sn‖` (relative to `‖K_cnᵀ a_c‖` when
/// the source vanishes).
pub fn dae_residual(schur: &SchurContext, a_c: &[f64], a_n: &[f64], j_sn: &[f64]) -> Result<f64> {
    let coupling = schur.k_cn().spmv_transpose(a_c)?;
    let mut r = schur.k_nn().spmv(a_n)?;
    axpy(1.0, &coupling, &mut r);
    axpy(-1.0, j_sn, &mut r);
    let scale = match norm2(j_sn) {
        s if s > 0.0 => s,
        _ => norm2(&coupling),
    };
    let res = norm2(&r);
    Ok(if scale > 0.0 { res / scale } else { res })
}

/// Explicit Euler driver on the Schur-complement system.
#[derive(Debug, Clone)]
pub struct ExplicitSolver<'p> {
    problem: &'p Problem,
    partition: DofPartition,
    kcc: KccAssembler,
    schur: SchurContext,
    mcc: MccSolver,
    options: SolverOptions,
    state: SolverState,
    nonlinear: bool,
    initial_dt: Option<f64>,
    schedule: Vec<StepRecord>,
    max_dae_residual: f64,
    last_dae_residual: f64,
}

impl<'p> ExplicitSolver<'p> {
    pub fn new(problem: &'p Problem, options: SolverOptions) -> Result<Self> {
        problem.validate()?;
        options.validate()?;
        let partition = partition(&problem.mesh);
        if partition.n_c == 0 {
            return Err(Error::InvalidArgument("no conducting unknowns: nothing to integrate".into()));
        }
        let blocks = assemble_blocks(&problem.mesh, &problem.materials, &partition, None)?;
        let kcc = KccAssembler::new(&problem.mesh, &partition)?;
        let (k_cc, _) = kcc.assemble(&problem.mesh, &problem.materials, &vec![0.0; partition.n_c])?;
        let schur = SchurContext::new(blocks.k_cn, blocks.k_nn, options.schur)?;
        let mcc = MccSolver::new(blocks.m_cc, options.mcc_mode, options.mcc_tol)?;
        let state = SolverState::new(k_cc, partition.n_n);
        let nonlinear = !problem.materials.is_linear();
        Ok(Self {
            problem,
            partition,
            kcc,
            schur,
            mcc,
            options,
            state,
            nonlinear,
            initial_dt: None,
            schedule: Vec::new(),
            max_dae_residual: 0.0,
            last_dae_residual: 0.0,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    /// Mutable access, e.g. to prescribe an initial state.
    pub fn state_mut(&mut self) -> &mut SolverState {
        &mut self.state
    }

    pub fn partition(&self) -> &DofPartition {
        &self.partition
    }

    pub fn schur(&self) -> &SchurContext {
        &self.schur
    }

    pub fn mcc(&self) -> &MccSolver {
        &self.mcc
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    fn cfl_options(&self) -> CflOptions {
        CflOptions {
            power_tol: self.options.power_tol,
            max_iter: self.options.power_max_iter,
            seed: self.options.seed,
            safety: self.options.safety,
        }
    }

    /// Stable step estimate for the current `K_cc`; does not change `dt`.
    pub fn estimate_cfl(&mut self) -> Result<f64> {
        let opts = self.cfl_options();
        estimate_cfl(&mut self.state, &mut self.schur, &self.mcc, &opts)
    }

    /// Sets the initial step: replayed, overridden, or estimated.
    pub fn initialize_dt(&mut self) -> Result<f64> {
        let dt = if let Some(replay) = &self.options.replay {
            replay
                .first()
                .ok_or_else(|| Error::InvalidArgument("empty replay schedule".into()))?
                .dt
        } else if let Some(dt) = self.options.dt_override {
            dt
        } else {
            self.estimate_cfl()?
        };
        self.state.dt = dt;
        self.initial_dt = Some(dt);
        Ok(dt)
    }

    /// Full nodal potential of the current state.
    pub fn full_potential(&self) -> Vec<f64> {
        self.partition.expand(&self.state.a_c, &self.state.a_n)
    }

    pub fn probe_value(&self) -> Result<f64> {
        self.problem.probe_value(&self.full_potential())
    }

    /// Advances one step, rebuilding `K_cc` first if required.
    pub fn step(&mut self) -> Result<StepRecord> {
        if self.initial_dt.is_none() {
            self.initialize_dt()?;
        }
        let index = self.state.step;
        self.schur.set_step(index + 1);
        let updated = match &self.options.replay {
            Some(replay) => {
                let rec = *replay.get(index).ok_or_else(|| {
                    Error::InvalidArgument(format!("replay schedule ends after {} steps", replay.len()))
                })?;
                if rec.updated {
                    update_kcc(&mut self.state, &self.problem.mesh, &self.problem.materials, &self.kcc)?;
                }
                self.state.dt = rec.dt;
                rec.updated
            }
            None => {
                let lambda_before = self.state.lambda_max;
                let updated = maybe_update_kcc(
                    &mut self.state,
                    &self.problem.mesh,
                    &self.problem.materials,
                    &self.kcc,
                    self.options.tol_update,
                )?;
                if updated && self.options.dt_override.is_none() {
                    if self.nonlinear {
                        let bound = self.estimate_cfl()?;
                        // shrink only
                        self.state.dt = self.state.dt.min(bound);
                    } else {
                        // a linear K_cc is rebuilt identically
                        self.state.lambda_max = lambda_before;
                    }
                }
                updated
            }
        };
        let j_sn = assemble_source(&self.problem.mesh, &self.problem.sources, self.state.t + self.state.dt, &self.partition)?;
        explicit_step(&mut self.state, &mut self.schur, &self.mcc, &j_sn)?;
        let res = dae_residual(&self.schur, &self.state.a_c, &self.state.a_n, &j_sn)?;
        self.max_dae_residual = self.max_dae_residual.max(res);
        self.last_dae_residual = res;
        let rec = StepRecord {
            dt: self.state.dt,
            updated,
        };
        self.schedule.push(rec);
        Ok(rec)
    }

    /// Integrates from the current state to `t_end`.
    pub fn run(mut self, t_end: f64) -> Result<RunResult> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
        }
        let started = Instant::now();
        if self.initial_dt.is_none() {
            self.initialize_dt()?;
        }
        let initial_dt = self.state.dt;
        if t_end / initial_dt > 1e8 {
            return Err(Error::InvalidArgument(format!(
                "t_end {t_end:e} s needs more than 1e8 steps of {initial_dt:e} s"
            )));
        }
        let mut samples = Vec::new();
        let mut snapshots = Vec::new();
        let mut dae_at_sample = 0.0f64;
        while self.state.t < t_end - 1e-6 * self.state.dt {
            self.step()?;
            let step = self.state.step;
            dae_at_sample = dae_at_sample.max(self.last_dae_residual);
            let last = self.state.t >= t_end - 1e-6 * self.state.dt;
            if step.is_multiple_of(self.options.output_every) || last {
                samples.push(self.sample(dae_at_sample)?);
                dae_at_sample = 0.0;
            }
            if let Some(every) = self.options.snapshot_every {
                if step.is_multiple_of(every) || last {
                    snapshots.push(Snapshot {
                        step,
                        t: self.state.t,
                        a: self.full_potential(),
                    });
                }
            }
        }
        Ok(RunResult {
            method: Method::Explicit,
            samples,
            update_count: self.state.update_count,
            step_count: self.state.step,
            wall_time: started.elapsed(),
            lambda_max: self.state.lambda_max,
            initial_dt,
            final_dt: self.state.dt,
            schedule: self.schedule,
            max_dae_residual: self.max_dae_residual,
            newton_iterations: 0,
            snapshots,
            stats: self.schur.into_stats(),
        })
    }

    fn sample(&self, dae_residual: f64) -> Result<Sample> {
        Ok(Sample {
            step: self.state.step,
            t: self.state.t,
            probe_b: self.probe_value()?,
            dt: self.state.dt,
            cumulative_pcg_iterations: self.schur.stats().stepping_iterations(),
            update_count: self.state.update_count,
            dae_residual,
        })
    }
}

/// Explicit run from rest to `t_end`.
pub fn run_explicit(problem: &Problem, options: SolverOptions, t_end: f64) -> Result<RunResult> {
    ExplicitSolver::new(problem, options)?.run(t_end)
}
