mod common;

use common::*;
use mqs_core::schur::{SchurContext, SchurOptions, SolvePurpose};
use mqs_core::startvec::StartStrategy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PCG_TOL: f64 = 1e-6;

fn context(b: &mqs_core::assembly::SystemBlocks, strategy: StartStrategy, combined: bool) -> SchurContext {
    SchurContext::new(
        b.k_cn.clone(),
        b.k_nn.clone(),
        SchurOptions {
            tol: PCG_TOL,
            strategy,
            combined_recovery: combined,
            ..SchurOptions::default()
        },
    )
    .unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn small_problem_has_at_most_200_free_dofs() {
    let (p, _) = blocks(&small_linear());
    assert!(p.free.len() <= 200, "{} free DoFs", p.free.len());
    assert!(p.n_c > 0 && p.n_n > 0);
}

#[test]
fn apply_ks_matches_dense_inverse() {
    let problem = small_linear();
    let (p, b) = blocks(&problem);
    let kinv = knn_inverse(&b);
    let kcn = dense(&b.k_cn);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for strategy in [StartStrategy::Previous, StartStrategy::cspe(), StartStrategy::pod()] {
        let mut ctx = context(&b, strategy, true);
        for _ in 0..6 {
            let a_c = random_vec(&mut rng, p.n_c, 1e-3);
            let got = ctx.apply_ks(&a_c).unwrap();
            let want = vec_of(&(&kcn * &kinv * kcn.transpose() * dvec(&a_c)));
            let err = rel_inf(&got, &want);
            assert!(err <= 10.0 * PCG_TOL, "{}: apply_ks error {err:e}", strategy.name());
        }
    }
}

#[test]
fn schur_rhs_matches_dense_inverse() {
    let problem = small_linear();
    let (p, b) = blocks(&problem);
    let kinv = knn_inverse(&b);
    let kcn = dense(&b.k_cn);
    let mut ctx = context(&b, StartStrategy::cspe(), true);
    for t in [1e-3, 5e-3, 2e-2] {
        let j = source(&problem, &p, t);
        let got = ctx.schur_rhs(&j).unwrap();
        let want = vec_of(&(-(&kcn * &kinv * dvec(&j))));
        let err = rel_inf(&got, &want);
        assert!(err <= 10.0 * PCG_TOL, "schur_rhs error {err:e} at t = {t}");
    }
}

#[test]
fn recover_an_matches_dense_inverse_in_both_forms() {
    let problem = small_linear();
    let (p, b) = blocks(&problem);
    let kinv = knn_inverse(&b);
    let kcn = dense(&b.k_cn);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for combined in [true, false] {
        let mut ctx = context(&b, StartStrategy::Previous, combined);
        for k in 1..5 {
            let a_c = random_vec(&mut rng, p.n_c, 1e-4);
            let j = source(&problem, &p, 2e-3 * k as f64);
            let got = ctx.recover_an(&a_c, &j).unwrap();
            let want = vec_of(&(&kinv * (dvec(&j) - kcn.transpose() * dvec(&a_c))));
            let err = rel_inf(&got, &want);
            assert!(err <= 10.0 * PCG_TOL, "combined = {combined}: error {err:e}");
        }
    }
}

#[test]
fn combined_recovery_uses_one_solve_and_literal_uses_two() {
    let problem = small_linear();
    let (p, b) = blocks(&problem);
    let a_c = vec![1e-4; p.n_c];
    let j = source(&problem, &p, 1e-2);

    let mut combined = context(&b, StartStrategy::Previous, true);
    combined.recover_an(&a_c, &j).unwrap();
    assert_eq!(combined.stats().solves(SolvePurpose::Recovery), 1);
    assert_eq!(combined.stats().records.len(), 1);

    let mut literal = context(&b, StartStrategy::Previous, false);
    literal.recover_an(&a_c, &j).unwrap();
    assert_eq!(literal.stats().solves(SolvePurpose::SourceTerm), 1);
    assert_eq!(literal.stats().solves(SolvePurpose::SchurApply), 1);
    assert_eq!(literal.stats().solves(SolvePurpose::Recovery), 0);
}

#[test]
fn schur_complement_is_symmetric_positive_definite() {
    let (_, b) = blocks(&small_linear());
    let s = schur_complement(&b, &b.k_cc);
    let asym = (&s - s.transpose()).amax() / s.amax();
    assert!(asym < 1e-12, "asymmetry {asym:e}");
    let eig = nalgebra::SymmetricEigen::new(s);
    assert!(eig.eigenvalues.min() > 0.0);
}

#[test]
fn zero_coupling_input_gives_zero_without_iterating() {
    let (p, b) = blocks(&small_linear());
    let mut ctx = context(&b, StartStrategy::Previous, true);
    let y = ctx.apply_ks(&vec![0.0; p.n_c]).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
    assert_eq!(ctx.stats().records[0].iterations, 0);
}
