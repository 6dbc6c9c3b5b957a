use super::{axpy, dot, norm2, scale};

/// Removes the components of `v` along the orthonormal `basis`.
///
/// Modified Gram–Schmidt, swept twice so that orthogonality holds to working
/// precision even for nearly dependent inputs.
pub(crate) fn project_out(basis: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
}

/// Copy of `v` with its components along the orthonormal `basis` removed.
pub fn gram_schmidt_residual(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut r = v.to_vec();
    project_out(basis, &mut r);
    r
}

/// Orthonormalizes `columns` in order with modified Gram–Schmidt.
///
/// A column whose residual after projection has norm `<= tol_drop` times its
/// original norm is dropped; so are zero columns.
pub fn mgs_orthonormalize(columns: &[Vec<f64>], tol_drop: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for col in columns {
        let original = norm2(col);
        if original == 0.0 {
            continue;
        }
        let mut v = col.clone();
        project_out(&basis, &mut v);
        let rest = norm2(&v);
        if rest <= tol_drop * original || rest == 0.0 {
            continue;
        }
        scale(1.0 / rest, &mut v);
        basis.push(v);
    }
    basis
}
