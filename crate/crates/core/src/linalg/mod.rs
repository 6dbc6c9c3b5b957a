//! Sparse and small dense kernels.

mod dense;
mod gram_schmidt;
mod pcg;
mod power;
mod precond;
mod sparse;

pub use dense::{dense_solve_spd, svd_small, SmallSvd};
pub use gram_schmidt::{gram_schmidt_residual, mgs_orthonormalize};
pub use pcg::{pcg, PcgReport};
pub use power::{power_iteration, PowerOptions, PowerReport};
pub use precond::{ic0_preconditioner, jacobi_preconditioner, Ic0, IdentityPreconditioner, Jacobi, Preconditioner};
pub use sparse::CsrMatrix;

use crate::Result;

/// A square linear map `x -> A x`.
///
/// `apply` takes `&mut self` so that operators backed by inner iterative
/// solves can keep warm-start state.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply(&mut self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

impl LinearOperator for &CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.spmv_into(x, y)
    }
}

/// Adapts a closure to [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) -> Result<()> {
        (self.f)(x, y)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
