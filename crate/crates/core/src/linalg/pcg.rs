use super::{axpy, dot, norm2, LinearOperator, Preconditioner};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcgReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_relative_residual: f64,
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite
/// operators.
///
/// Convergence is `‖b - A x‖ / ‖b‖ <= tol`. For `b = 0` the reference norm is
/// `‖x0‖`, and `x0 = 0` returns immediately. On a consistent singular system
/// the iterates never leave `x0 + range(A)`, so the null-space component of
/// the result equals that of `x0`.
///
/// Exhausting `max_iter` is not an error; the report has `converged = false`.
/// A non-positive curvature or a NaN is reported as [`Error::PcgBreakdown`].
pub fn pcg<A, P>(op: &mut A, b: &[f64], x0: &[f64], precond: &P, tol: f64, max_iter: usize) -> Result<PcgReport>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = op.dim();
    for (context, len) in [("pcg rhs", b.len()), ("pcg start vector", x0.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found: len,
            });
        }
    }

    let mut x = x0.to_vec();
    let mut r = b.to_vec();
    let mut q = vec![0.0; n];
    if x.iter().any(|&v| v != 0.0) {
        op.apply(&x, &mut q)?;
        axpy(-1.0, &q, &mut r);
    }

    let bnorm = norm2(b);
    let reference = if bnorm > 0.0 { bnorm } else { norm2(&x) };
    if reference == 0.0 {
        return Ok(PcgReport {
            solution: x,
            iterations: 0,
            converged: true,
            final_relative_residual: 0.0,
        });
    }

    let mut res = norm2(&r) / reference;
    if res.is_nan() {
        return Err(Error::PcgBreakdown { iterations: 0 });
    }
    if res <= tol {
        return Ok(PcgReport {
            solution: x,
            iterations: 0,
            converged: true,
            final_relative_residual: res,
        });
    }

    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for it in 1..=max_iter {
        op.apply(&p, &mut q)?;
        let curvature = dot(&p, &q);
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(Error::PcgBreakdown { iterations: it - 1 });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        res = norm2(&r) / reference;
        if res.is_nan() {
            return Err(Error::PcgBreakdown { iterations: it });
        }
        if res <= tol {
            return Ok(PcgReport {
                solution: x,
                iterations: it,
                converged: true,
                final_relative_residual: res,
            });
        }
        precond.apply(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }

    Ok(PcgReport {
        solution: x,
        iterations: max_iter,
        converged: false,
        final_relative_residual: res,
    })
}
