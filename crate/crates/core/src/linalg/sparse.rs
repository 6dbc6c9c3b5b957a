use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within a row. Matrices built by
/// [`CsrMatrix::from_triplets`] store no explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            if d != 0.0 {
                m.col_indices.push(i);
                m.values.push(d);
            }
            m.row_offsets[i + 1] = m.col_indices.len();
        }
        m
    }

    /// Builds a matrix from `(row, col, value)` entries.
    ///
    /// Duplicates are summed in input order, so a fixed input sequence gives
    /// bitwise-identical values. Entries that sum to exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable: equal keys keep input order
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));

        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut k = 0;
        while k < order.len() {
            let (i, j, _) = triplets[order[k]];
            let mut sum = 0.0;
            while k < order.len() && triplets[order[k]].0 == i && triplets[order[k]].1 == j {
                sum += triplets[order[k]].2;
                k += 1;
            }
            if sum != 0.0 {
                col_indices.push(j);
                values.push(sum);
                row_offsets[i + 1] += 1;
            }
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Dense row-major input, mostly for tests and small problems.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    context: "CsrMatrix::from_dense",
                    expected: ncols,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    /// Storage index of entry `(i, j)`, if it is part of the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|k| self.row_offsets[i] + k)
    }

    /// Mutable access to the stored values; the pattern stays fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_dims(x.len(), y.len(), false)?;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `y = Aᵀ x` without forming the transpose.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.ncols];
        self.spmv_transpose_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_transpose_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_dims(x.len(), y.len(), true)?;
        y.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                y[self.col_indices[k]] += self.values[k] * xi;
            }
        }
        Ok(())
    }

    fn check_dims(&self, xlen: usize, ylen: usize, transpose: bool) -> Result<()> {
        let (rows, cols) = if transpose {
            (self.ncols, self.nrows)
        } else {
            (self.nrows, self.ncols)
        };
        if xlen != cols {
            return Err(Error::DimensionMismatch {
                context: "spmv input",
                expected: cols,
                found: xlen,
            });
        }
        if ylen != rows {
            return Err(Error::DimensionMismatch {
                context: "spmv output",
                expected: rows,
                found: ylen,
            });
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &triplets).expect("indices in range")
    }

    /// `alpha * self + beta * other` for equally shaped matrices.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                context: "CsrMatrix::add_scaled",
                expected: self.nrows * self.ncols,
                found: other.nrows * other.ncols,
            });
        }
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for (m, s) in [(self, alpha), (other, beta)] {
            for i in 0..m.nrows {
                let (cols, vals) = m.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    triplets.push((i, j, s * v));
                }
            }
        }
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    /// Maximum absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Matrix Market coordinate text (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
            }
        }
        s
    }

    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_matrix_market())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_product() {
        let y = CsrMatrix::identity(3).spmv(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn small_product() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![1.0, 3.0]]).unwrap();
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(a.spmv_transpose(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = CsrMatrix::identity(3);
        assert!(matches!(a.spmv(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn random_against_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let mut dense = vec![vec![0.0; n]; n];
        for row in dense.iter_mut() {
            for v in row.iter_mut() {
                if rng.gen_bool(0.1) {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let a = CsrMatrix::from_dense(&dense).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = a.spmv(&x).unwrap();
        let yt = a.spmv_transpose(&x).unwrap();
        for i in 0..n {
            let exact: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            let exact_t: f64 = (0..n).map(|j| dense[j][i] * x[j]).sum();
            let scale: f64 = (0..n).map(|j| (dense[i][j] * x[j]).abs()).sum::<f64>().max(1e-300);
            assert!((y[i] - exact).abs() <= 1e-13 * scale);
            let scale_t: f64 = (0..n).map(|j| (dense[j][i] * x[j]).abs()).sum::<f64>().max(1e-300);
            assert!((yt[i] - exact_t).abs() <= 1e-13 * scale_t);
        }
    }

    #[test]
    fn triplets_sum_and_drop_zeros() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            &[(0, 1, 1.0), (0, 0, 2.0), (0, 1, -1.0), (1, 1, 4.0), (1, 0, 0.5), (1, 0, 0.5)],
        )
        .unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.row_offsets(), &[0, 1, 3]);
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn matrix_market_export() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![1.0, 3.0]]).unwrap();
        let text = a.to_matrix_market();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("%%MatrixMarket"));
        assert_eq!(lines[1], "2 2 3");
        assert_eq!(lines[2], "1 1 2e0");
        assert_eq!(lines[3], "2 1 1e0");
    }
}
