#![allow(dead_code)]

use mqs_core::assembly::{assemble_blocks, assemble_source, partition, DofPartition, SourceSpec, SystemBlocks};
use mqs_core::integrate::Problem;
use mqs_core::linalg::CsrMatrix;
use mqs_core::materials::{MaterialModel, MaterialTable, ReluctivityLaw};
use mqs_core::mesh::{generate_rect_mesh, RegionTag};
use mqs_core::NU0;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const CONDUCTIVITY: f64 = 1.0e6;

pub fn linear_steel() -> ReluctivityLaw {
    ReluctivityLaw::Linear { nu: NU0 / 500.0 }
}

pub fn brauer_steel() -> ReluctivityLaw {
    ReluctivityLaw::Brauer { k1: 200.0, k2: 5.0, k3: 3.0 }
}

fn inside(p: [f64; 2], x: (f64, f64), y: (f64, f64)) -> bool {
    p[0] > x.0 && p[0] < x.1 && p[1] > y.0 && p[1] < y.1
}

/// Square box of side 0.1 m with a conducting block, a coil above it and a
/// probe in the air between them. `n` cells per side.
pub fn block_problem(n: usize, law: ReluctivityLaw, conductivity: f64, ampere_turns: f64) -> Problem {
    let mesh = generate_rect_mesh(0.1, 0.1, n, n, |c| {
        if inside(c, (0.03, 0.07), (0.025, 0.055)) {
            RegionTag::conductor(0)
        } else if inside(c, (0.02, 0.08), (0.07, 0.085)) {
            RegionTag::coil(0)
        } else if inside(c, (0.035, 0.065), (0.055, 0.07)) {
            RegionTag::AIR.with_probe(0)
        } else {
            RegionTag::AIR
        }
    })
    .unwrap();
    let materials = MaterialTable::default().with_conductor(0, MaterialModel { conductivity, law });
    Problem {
        mesh,
        materials,
        sources: vec![SourceSpec {
            coil: 0,
            turns: 1.0,
            i_max: ampere_turns,
            tau: 0.01,
            direction: 1.0,
        }],
        probe: 0,
    }
}

pub fn small_linear() -> Problem {
    block_problem(12, linear_steel(), CONDUCTIVITY, 1000.0)
}

pub fn small_nonlinear() -> Problem {
    block_problem(12, brauer_steel(), CONDUCTIVITY, 2.0e4)
}

pub fn blocks(problem: &Problem) -> (DofPartition, SystemBlocks) {
    let p = partition(&problem.mesh);
    let b = assemble_blocks(&problem.mesh, &problem.materials, &p, None).unwrap();
    (p, b)
}

pub fn source(problem: &Problem, p: &DofPartition, t: f64) -> Vec<f64> {
    assemble_source(&problem.mesh, &problem.sources, t, p).unwrap()
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            d[(i, j)] = v;
        }
    }
    d
}

pub fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Dense `K_nn⁻¹`.
pub fn knn_inverse(b: &SystemBlocks) -> DMatrix<f64> {
    dense(&b.k_nn).try_inverse().expect("K_nn is nonsingular")
}

/// Dense `K_cc - K_cn K_nn⁻¹ K_cnᵀ`.
pub fn schur_complement(b: &SystemBlocks, k_cc: &CsrMatrix) -> DMatrix<f64> {
    let kcn = dense(&b.k_cn);
    dense(k_cc) - &kcn * knn_inverse(b) * kcn.transpose()
}

/// Generalized eigenpairs of `S x = λ W x` by a Cholesky reduction, sorted
/// ascending, with `W`-orthonormal eigenvectors.
pub fn generalized_eigen(s: &DMatrix<f64>, w: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let chol = w.clone().cholesky().expect("metric is SPD");
    let l = chol.l();
    let linv = l.clone().try_inverse().unwrap();
    let mut c = &linv * s * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&lam, y)| (lam, linv.transpose() * y))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `‖a - b‖∞ / ‖b‖∞`.
pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    max_abs(&d) / max_abs(b)
}
