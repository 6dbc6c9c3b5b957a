use nalgebra::{DMatrix, SymmetricEigen};

use super::{axpy, dot, gram_schmidt::project_out, norm2, scale};
use crate::{Error, Result};

/// Solves `A z = b` for a small symmetric positive definite `A` by Cholesky.
///
/// A nonpositive pivot is reported with its index so callers can drop the
/// offending basis vector.
pub fn dense_solve_spd(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            context: "dense_solve_spd",
            expected: n,
            found: if a.ncols() != n { a.ncols() } else { b.len() },
        });
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        // relative pivot floor: treat cancellation down to rounding as rank loss
        if !(d > 1e-14 * a[(j, j)].abs()) || !(d > 0.0) {
            return Err(Error::NonPositivePivot { index: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[(i, k)] * z[k];
        }
        z[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[(k, i)] * z[k];
        }
        z[i] /= l[(i, i)];
    }
    Ok(z)
}

/// Thin SVD of a tall matrix given by a few columns.
#[derive(Debug, Clone, Default)]
pub struct SmallSvd {
    /// Left singular vectors, one per retained singular value.
    pub u: Vec<Vec<f64>>,
    /// Nonincreasing singular values.
    pub sigma: Vec<f64>,
}

/// Singular values below this fraction of the largest are omitted.
const RANK_CUTOFF: f64 = 1e-12;

/// Left singular vectors and singular values of `X = [x_1 .. x_m]` from the
/// eigendecomposition of the `m x m` Gram matrix `XᵀX`.
///
/// The Gram route squares the condition number, so its eigenvalues carry an
/// absolute noise floor of about `m ε σ₁²`. Directions below that floor (or
/// below `1e-12 σ₁`) are omitted. Left vectors `X v_i / σ_i` are swept once
/// more with Gram–Schmidt to restore orthonormality lost to rounding.
pub fn svd_small(columns: &[Vec<f64>]) -> Result<SmallSvd> {
    let m = columns.len();
    if m == 0 {
        return Ok(SmallSvd::default());
    }
    let n = columns[0].len();
    if let Some(bad) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "svd_small columns",
            expected: n,
            found: bad.len(),
        });
    }
    let gram = DMatrix::from_fn(m, m, |i, j| dot(&columns[i], &columns[j]));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Ok(SmallSvd::default());
    }
    let floor = (m as f64 * 8.0 * f64::EPSILON * top).max(RANK_CUTOFF * RANK_CUTOFF * top);

    let mut out = SmallSvd::default();
    for &k in &order {
        let lam = eig.eigenvalues[k];
        if lam <= floor {
            break;
        }
        let sigma = lam.sqrt();
        let mut u = vec![0.0; n];
        for (i, col) in columns.iter().enumerate() {
            axpy(eig.eigenvectors[(i, k)], col, &mut u);
        }
        scale(1.0 / sigma, &mut u);
        project_out(&out.u, &mut u);
        let len = norm2(&u);
        if !(len > 0.5) {
            // lost to rounding; everything after is smaller still
            break;
        }
        scale(1.0 / len, &mut u);
        out.u.push(u);
        out.sigma.push(sigma);
    }
    Ok(out)
}
