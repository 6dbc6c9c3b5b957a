mod common;

use common::*;
use mqs_core::integrate::{ExplicitSolver, MccMode, Problem, SolverOptions};
use mqs_core::Error;
use nalgebra::{DMatrix, DVector};

fn dense_lambda(problem: &Problem, lumped: bool) -> (f64, DVector<f64>) {
    let (_, b) = blocks(problem);
    let s = schur_complement(&b, &b.k_cc);
    let mut w = dense(&b.m_cc);
    if lumped {
        let sums: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
        w = DMatrix::from_diagonal(&DVector::from_vec(sums));
    }
    let (vals, vecs) = generalized_eigen(&s, &w);
    (*vals.last().unwrap(), vecs.last().unwrap().clone())
}

fn estimate(problem: &Problem, options: SolverOptions) -> (f64, f64) {
    let mut solver = ExplicitSolver::new(problem, options).unwrap();
    let dt = solver.estimate_cfl().unwrap();
    (solver.state().lambda_max.unwrap(), dt)
}

#[test]
fn lambda_max_matches_dense_generalized_eigenvalue() {
    let problem = small_linear();
    let (want, _) = dense_lambda(&problem, false);
    let (got, dt) = estimate(&problem, SolverOptions::default());
    assert!((got - want).abs() / want < 1e-3, "power {got:e} vs dense {want:e}");
    assert!((dt - 0.95 * 2.0 / want).abs() / dt < 1e-3);
}

#[test]
fn lumped_mass_estimate_matches_its_own_oracle() {
    let problem = small_linear();
    let (want, _) = dense_lambda(&problem, true);
    let options = SolverOptions {
        mcc_mode: MccMode::Lumped,
        ..SolverOptions::default()
    };
    let (got, _) = estimate(&problem, options);
    assert!((got - want).abs() / want < 1e-3, "power {got:e} vs dense {want:e}");
}

#[test]
fn estimate_is_reproducible_for_a_fixed_seed() {
    let problem = small_linear();
    let a = estimate(&problem, SolverOptions::default());
    let b = estimate(&problem, SolverOptions::default());
    assert_eq!(a.0.to_bits(), b.0.to_bits());
}

/// Source-free copy of `problem`, so that the state evolves freely.
fn unforced(mut problem: Problem) -> Problem {
    problem.sources.clear();
    problem
}

fn dominant_mode_run(factor: f64, steps: usize) -> (Vec<f64>, Option<Error>) {
    let problem = unforced(small_linear());
    let (lambda, mode) = dense_lambda(&problem, false);
    let options = SolverOptions {
        dt_override: Some(factor * 2.0 / lambda),
        ..SolverOptions::default()
    };
    let mut solver = ExplicitSolver::new(&problem, options).unwrap();
    let a0: Vec<f64> = mode.iter().map(|v| 1e-3 * v / mode.amax()).collect();
    solver.state_mut().a_c = a0.clone();
    solver.state_mut().a_c_last_update = a0.clone();
    let mut norms = vec![mqs_core::linalg::norm2(&a0)];
    for _ in 0..steps {
        match solver.step() {
            Ok(_) => norms.push(mqs_core::linalg::norm2(&solver.state().a_c)),
            Err(e) => return (norms, Some(e)),
        }
    }
    (norms, None)
}

#[test]
fn below_the_bound_the_dominant_mode_stays_bounded_for_1000_steps() {
    let (norms, err) = dominant_mode_run(0.9, 1000);
    assert!(err.is_none(), "{err:?}");
    assert_eq!(norms.len(), 1001);
    let peak = norms.iter().cloned().fold(0.0, f64::max);
    assert!(peak <= norms[0] * (1.0 + 1e-9), "peak {peak:e} above start {:e}", norms[0]);
    assert!(norms[1000] < norms[0]);
}

#[test]
fn above_the_bound_the_dominant_mode_grows_monotonically() {
    let (norms, err) = dominant_mode_run(1.1, 1000);
    assert!(matches!(err, Some(Error::Instability { .. })), "expected instability, got {err:?}");
    assert!(norms.len() > 5);
    for w in norms.windows(2) {
        assert!(w[1] > w[0], "norm did not grow: {} -> {}", w[0], w[1]);
    }
    // growth factor per step is |1 - 2.2| = 1.2 for a pure mode
    let rate = norms[norms.len() - 1] / norms[norms.len() - 2];
    assert!((rate - 1.2).abs() < 0.05, "growth rate {rate}");
}

#[test]
fn halving_h_roughly_quadruples_lambda() {
    // 20 and 40 cells put every region edge on grid lines
    let coarse = block_problem(20, linear_steel(), CONDUCTIVITY, 1000.0);
    let fine = block_problem(40, linear_steel(), CONDUCTIVITY, 1000.0);
    let (lc, _) = estimate(&coarse, SolverOptions::default());
    let (lf, _) = estimate(&fine, SolverOptions::default());
    let ratio = lf / lc;
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn step_bound_scales_inversely_with_conductivity() {
    let base = block_problem(12, linear_steel(), CONDUCTIVITY, 1000.0);
    let hot = block_problem(12, linear_steel(), 10.0 * CONDUCTIVITY, 1000.0);
    let (_, dt0) = estimate(&base, SolverOptions::default());
    let (_, dt1) = estimate(&hot, SolverOptions::default());
    let ratio = dt1 / dt0;
    assert!((ratio - 10.0).abs() < 1e-3, "ratio {ratio}");
}
