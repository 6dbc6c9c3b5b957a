use super::CsrMatrix;
use crate::{Error, Result};

/// Symmetric positive definite approximate inverse, `z = P⁻¹ r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

impl<P: Preconditioner + ?Sized> Preconditioner for Box<P> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        (**self).apply(r, z)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Diagonal scaling. Rows with a zero diagonal pass through unchanged.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let mut inv_diag = Vec::with_capacity(diag.len());
        for (row, &d) in diag.iter().enumerate() {
            if d < 0.0 || d.is_nan() {
                return Err(Error::NegativeDiagonal { row, value: d });
            }
            inv_diag.push(if d == 0.0 { 1.0 } else { 1.0 / d });
        }
        Ok(Self { inv_diag })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

pub fn jacobi_preconditioner(a: &CsrMatrix) -> Result<Jacobi> {
    Jacobi::from_diagonal(&a.diagonal())
}

/// Zero fill-in incomplete Cholesky factor `L` on the lower pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ic0 {
    // lower triangle by rows, diagonal stored last in each row
    factor: CsrMatrix,
}

impl Ic0 {
    pub fn factor(&self) -> &CsrMatrix {
        &self.factor
    }
}

/// Incomplete Cholesky with zero fill.
///
/// Fails with [`Error::NonPositivePivot`] when a pivot is not positive; the
/// caller is expected to fall back to Jacobi.
pub fn ic0_preconditioner(a: &CsrMatrix) -> Result<Ic0> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "ic0 requires a square matrix",
            expected: n,
            found: a.ncols(),
        });
    }
    let mut offsets = vec![0usize; n + 1];
    let mut cols: Vec<usize> = Vec::with_capacity(a.nnz() / 2 + n);
    let mut vals: Vec<f64> = Vec::with_capacity(a.nnz() / 2 + n);

    for i in 0..n {
        let start = cols.len();
        let (acols, avals) = a.row(i);
        let mut diag = 0.0;
        for (&k, &aik) in acols.iter().zip(avals) {
            if k > i {
                break;
            }
            if k == i {
                diag = aik;
                break;
            }
            // L[i,k] = (A[i,k] - sum_{p<k} L[i,p] L[k,p]) / L[k,k]
            let s = aik - sparse_dot_below(&cols[start..], &vals[start..], &cols[offsets[k]..offsets[k + 1]], &vals[offsets[k]..offsets[k + 1]], k);
            let lkk = vals[offsets[k + 1] - 1];
            cols.push(k);
            vals.push(s / lkk);
        }
        let sq: f64 = vals[start..].iter().map(|v| v * v).sum();
        let pivot = diag - sq;
        if !(pivot > 0.0) {
            return Err(Error::NonPositivePivot { index: i, value: pivot });
        }
        cols.push(i);
        vals.push(pivot.sqrt());
        offsets[i + 1] = cols.len();
    }

    let mut triplets = Vec::with_capacity(cols.len());
    for i in 0..n {
        for k in offsets[i]..offsets[i + 1] {
            triplets.push((i, cols[k], vals[k]));
        }
    }
    Ok(Ic0 {
        factor: CsrMatrix::from_triplets(n, n, &triplets)?,
    })
}

/// Sum of `a[p] * b[p]` over shared columns `p < limit`.
fn sparse_dot_below(acols: &[usize], avals: &[f64], bcols: &[usize], bvals: &[f64], limit: usize) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut s = 0.0;
    while i < acols.len() && j < bcols.len() {
        let (ca, cb) = (acols[i], bcols[j]);
        if ca >= limit || cb >= limit {
            break;
        }
        match ca.cmp(&cb) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += avals[i] * bvals[j];
                i += 1;
                j += 1;
            }
        }
    }
    s
}

impl Preconditioner for Ic0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let l = &self.factor;
        let n = l.nrows();
        // L y = r
        for i in 0..n {
            let (cols, vals) = l.row(i);
            let last = cols.len() - 1;
            let mut s = r[i];
            for k in 0..last {
                s -= vals[k] * z[cols[k]];
            }
            z[i] = s / vals[last];
        }
        // Lᵀ z = y, column-oriented sweep over the rows of L
        for i in (0..n).rev() {
            let (cols, vals) = l.row(i);
            let last = cols.len() - 1;
            z[i] /= vals[last];
            let zi = z[i];
            for k in 0..last {
                z[cols[k]] -= vals[k] * zi;
            }
        }
    }
}
