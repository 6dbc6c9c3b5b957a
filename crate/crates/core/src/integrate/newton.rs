use std::time::Instant;

use super::result::{Method, RunResult, Sample, Snapshot};
use super::Problem;
use crate::assembly::{assemble, geometric_stiffness, source_load_full, FreeDofs};
use crate::linalg::{axpy, ic0_preconditioner, jacobi_preconditioner, norm2, pcg, CsrMatrix, Preconditioner};
use crate::materials::ReluctivityLaw;
use crate::schur::{IterationStats, SolvePurpose, SolveRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop when `‖F(a)‖ <= tol · ‖M/dt a_old + j‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative tolerance of the inner PCG solves.
    pub linear_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            linear_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone)]
struct ElementData {
    /// Free index of each corner, `None` on the Dirichlet boundary.
    dofs: [Option<usize>; 3],
    /// Storage index in the Jacobian pattern of each local pair.
    slots: [[Option<usize>; 3]; 3],
    geometry: [[f64; 3]; 3],
    area: f64,
    law: ReluctivityLaw,
}

/// Backward Euler system on all free unknowns:
/// `F(a) = (M/dt + K(a)) a - M/dt a_old - j`.
#[derive(Debug, Clone)]
pub struct ImplicitSystem<'p> {
    problem: &'p Problem,
    free: FreeDofs,
    m: CsrMatrix,
    /// Union of the mass and stiffness patterns, holding the values of `M`.
    pattern: CsrMatrix,
    elements: Vec<ElementData>,
}

impl<'p> ImplicitSystem<'p> {
    pub fn new(problem: &'p Problem) -> Result<Self> {
        problem.validate()?;
        let mesh = &problem.mesh;
        let free = FreeDofs::new(mesh);
        let (m, _) = assemble(mesh, &problem.materials, None)?;
        let dofs: Vec<[Option<usize>; 3]> = mesh.elements().iter().map(|el| el.map(|n| free.free_index(n))).collect();

        // placeholder ones keep every structural entry; the values are then
        // replaced by those of M (zero outside the conductors)
        let mut trip = Vec::with_capacity(9 * dofs.len());
        for d in &dofs {
            for r in d.iter().flatten() {
                for c in d.iter().flatten() {
                    trip.push((*r, *c, 1.0));
                }
            }
        }
        let mut pattern = CsrMatrix::from_triplets(free.len(), free.len(), &trip)?;
        pattern.values_mut().iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m.nrows() {
            let (cols, vals) = m.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let k = pattern.position(i, c).expect("mass pattern inside the stiffness pattern");
                pattern.values_mut()[k] = v;
            }
        }

        let mut elements = Vec::with_capacity(mesh.num_elements());
        for (e, tag) in mesh.regions().iter().enumerate() {
            let coords = mesh.element_coords(e);
            let d = dofs[e];
            elements.push(ElementData {
                dofs: d,
                slots: std::array::from_fn(|i| {
                    std::array::from_fn(|j| match (d[i], d[j]) {
                        (Some(r), Some(c)) => pattern.position(r, c),
                        _ => None,
                    })
                }),
                geometry: geometric_stiffness(&coords)?,
                area: mesh.element_area(e),
                law: problem.materials.lookup(tag)?.law,
            });
        }
        Ok(Self {
            problem,
            free,
            m,
            pattern,
            elements,
        })
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn free_dofs(&self) -> &FreeDofs {
        &self.free
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.m
    }

    /// Source load on the free unknowns at time `t`.
    pub fn source(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.free.restrict(&source_load_full(&self.problem.mesh, &self.problem.sources, t)?))
    }

    fn local(&self, el: &ElementData, a: &[f64]) -> [f64; 3] {
        el.dofs.map(|d| d.map_or(0.0, |i| a[i]))
    }

    /// `K(a) a`, and the Jacobian `M/dt + d(K(a) a)/da` when requested.
    fn stiffness_action(&self, a: &[f64], dt: f64, jacobian: bool) -> Result<(Vec<f64>, Option<CsrMatrix>)> {
        let n = self.len();
        let mut ka = vec![0.0; n];
        let mut jac = jacobian.then(|| {
            let mut j = self.pattern.clone();
            j.values_mut().iter_mut().for_each(|v| *v /= dt);
            j
        });
        for el in &self.elements {
            if el.dofs.iter().all(Option::is_none) {
                continue;
            }
            let ae = self.local(el, a);
            let g = &el.geometry;
            let ga: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| g[i][j] * ae[j]).sum());
            let b2 = ((0..3).map(|i| ae[i] * ga[i]).sum::<f64>() / el.area).max(0.0);
            let nu = crate::materials::nu(&el.law, b2)?;
            let dnu = crate::materials::dnu_db2(&el.law, b2)?;
            for i in 0..3 {
                if let Some(r) = el.dofs[i] {
                    ka[r] += nu * ga[i];
                    if let Some(jm) = jac.as_mut() {
                        let vals = jm.values_mut();
                        for j in 0..3 {
                            if let Some(k) = el.slots[i][j] {
                                vals[k] += nu * g[i][j] + 2.0 * dnu / el.area * ga[i] * ga[j];
                            }
                        }
                    }
                }
            }
        }
        Ok((ka, jac))
    }

    /// Backward Euler residual `F(a)`.
    pub fn residual(&self, a: &[f64], a_old: &[f64], dt: f64, j: &[f64]) -> Result<Vec<f64>> {
        Ok(self.residual_and_jacobian(a, a_old, dt, j, false)?.0)
    }

    /// `F(a)` and `J(a) = M/dt + d(K(a) a)/da`.
    pub fn residual_and_jacobian(
        &self,
        a: &[f64],
        a_old: &[f64],
        dt: f64,
        j: &[f64],
        with_jacobian: bool,
    ) -> Result<(Vec<f64>, Option<CsrMatrix>)> {
        let (mut f, jac) = self.stiffness_action(a, dt, with_jacobian)?;
        let diff: Vec<f64> = a.iter().zip(a_old).map(|(x, y)| (x - y) / dt).collect();
        let mdiff = self.m.spmv(&diff)?;
        axpy(1.0, &mdiff, &mut f);
        axpy(-1.0, j, &mut f);
        Ok((f, jac))
    }
}

/// One backward Euler step by Newton's method with a residual-decrease line
/// search, starting from `a_old`.
pub fn newton_solve(
    system: &ImplicitSystem,
    a_old: &[f64],
    dt: f64,
    j: &[f64],
    t: f64,
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut scale_vec = system.m.spmv(a_old)?;
    scale_vec.iter_mut().for_each(|v| *v /= dt);
    axpy(1.0, j, &mut scale_vec);
    let scale = norm2(&scale_vec);

    let mut a = a_old.to_vec();
    let mut iterations = 0;
    let mut linear_iterations = 0;
    let (mut f, mut jac) = system.residual_and_jacobian(&a, a_old, dt, j, true)?;
    loop {
        let fnorm = norm2(&f);
        if !fnorm.is_finite() {
            return Err(Error::NewtonDiverged { t, iterations });
        }
        let rel = if scale > 0.0 { fnorm / scale } else { fnorm };
        if rel <= opts.tol || fnorm == 0.0 {
            return Ok(NewtonReport {
                solution: a,
                iterations,
                linear_iterations,
                relative_residual: rel,
            });
        }
        if iterations == opts.max_iter {
            return Err(Error::NewtonDiverged { t, iterations });
        }
        let jm = match jac.take() {
            Some(jm) => jm,
            None => system.residual_and_jacobian(&a, a_old, dt, j, true)?.1.expect("Jacobian requested"),
        };
        let precond: Box<dyn Preconditioner> = match ic0_preconditioner(&jm) {
            Ok(p) => Box::new(p),
            Err(Error::NonPositivePivot { .. }) => Box::new(jacobi_preconditioner(&jm)?),
            Err(e) => return Err(e),
        };
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let n = a.len();
        let rep = pcg(&mut &jm, &neg_f, &vec![0.0; n], &precond, opts.linear_tol, 10 * n + 100)?;
        linear_iterations += rep.iterations;
        if !rep.converged {
            return Err(Error::NotConverged {
                iterations: rep.iterations,
                residual: rep.final_relative_residual,
            });
        }
        let delta = rep.solution;
        iterations += 1;

        // backtrack until the residual decreases
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = a.iter().zip(&delta).map(|(x, d)| x + step * d).collect();
            let ft = system.residual(&trial, a_old, dt, j)?;
            if norm2(&ft) < fnorm || step < 1e-3 {
                a = trial;
                f = ft;
                break;
            }
            step *= 0.5;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitOptions {
    pub dt: f64,
    pub newton: NewtonOptions,
    pub output_every: usize,
    pub snapshot_every: Option<usize>,
}

impl ImplicitOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            newton: NewtonOptions::default(),
            output_every: 1,
            snapshot_every: None,
        }
    }
}

/// Backward Euler run from rest (or from `initial`, a free-DoF vector) to
/// `t_end` with a fixed step.
pub fn run_implicit(problem: &Problem, options: &ImplicitOptions, t_end: f64, initial: Option<&[f64]>) -> Result<RunResult> {
    let dt = options.dt;
    if !(dt > 0.0) || !dt.is_finite() || !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t_end > 0, got {dt} and {t_end}")));
    }
    if options.output_every == 0 || options.snapshot_every == Some(0) {
        return Err(Error::InvalidArgument("output intervals must be at least 1".into()));
    }
    let started = Instant::now();
    let system = ImplicitSystem::new(problem)?;
    let mut a = match initial {
        Some(x) if x.len() == system.len() => x.to_vec(),
        Some(x) => {
            return Err(Error::DimensionMismatch {
                context: "implicit initial state",
                expected: system.len(),
                found: x.len(),
            })
        }
        None => vec![0.0; system.len()],
    };
    let mut stats = IterationStats {
        strategy: "newton".into(),
        records: Vec::new(),
    };
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut t = 0.0;
    let mut step = 0;
    let mut newton_iterations = 0;
    let mut cumulative = 0;
    while t < t_end - 1e-6 * dt {
        let t_new = t + dt;
        let j = system.source(t_new)?;
        let rep = newton_solve(&system, &a, dt, &j, t_new, &options.newton)?;
        step += 1;
        t = t_new;
        a = rep.solution;
        newton_iterations += rep.iterations;
        cumulative += rep.linear_iterations;
        stats.records.push(SolveRecord {
            step,
            purpose: SolvePurpose::Recovery,
            iterations: rep.linear_iterations,
            residual: rep.relative_residual,
        });
        let last = t >= t_end - 1e-6 * dt;
        let full = system.free.expand(&a);
        if step % options.output_every == 0 || last {
            samples.push(Sample {
                step,
                t,
                probe_b: problem.probe_value(&full)?,
                dt,
                cumulative_pcg_iterations: cumulative,
                update_count: newton_iterations,
                dae_residual: 0.0,
            });
        }
        if let Some(every) = options.snapshot_every {
            if step % every == 0 || last {
                snapshots.push(Snapshot { step, t, a: full });
            }
        }
    }
    Ok(RunResult {
        method: Method::Implicit,
        samples,
        stats,
        update_count: newton_iterations,
        step_count: step,
        wall_time: started.elapsed(),
        lambda_max: None,
        initial_dt: dt,
        final_dt: dt,
        schedule: Vec::new(),
        max_dae_residual: 0.0,
        newton_iterations,
        snapshots,
    })
}
