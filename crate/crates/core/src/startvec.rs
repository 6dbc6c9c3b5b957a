//! PCG start vectors for sequences of solves with one fixed matrix.
//!
//! Both generators keep a small basis built from earlier solutions and
//! return the Galerkin solution of the new system restricted to that basis:
//! `x0 = V (Vᵀ K V)⁻¹ Vᵀ r`. If the true solution lies in the span, PCG
//! starts converged.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{dense_solve_spd, dot, gram_schmidt_residual, norm2, svd_small, CsrMatrix};
use crate::{Error, Result};

/// How a PCG start vector is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StartStrategy {
    /// The solution of the previous solve.
    Previous,
    /// Cascaded subspace projection extrapolation over the last `window`
    /// solutions.
    Cspe {
        #[serde(default = "default_cspe_window")]
        window: usize,
    },
    /// POD basis of the last `window` solutions, truncated at `tol_pod`.
    Pod {
        #[serde(default = "default_pod_window")]
        window: usize,
        #[serde(default = "default_tol_pod")]
        tol_pod: f64,
    },
}

pub fn default_cspe_window() -> usize {
    5
}

pub fn default_pod_window() -> usize {
    10
}

pub fn default_tol_pod() -> f64 {
    1e4
}

impl StartStrategy {
    pub fn cspe() -> Self {
        StartStrategy::Cspe {
            window: default_cspe_window(),
        }
    }

    pub fn pod() -> Self {
        StartStrategy::Pod {
            window: default_pod_window(),
            tol_pod: default_tol_pod(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StartStrategy::Previous => "previous",
            StartStrategy::Cspe { .. } => "cspe",
            StartStrategy::Pod { .. } => "pod",
        }
    }

    /// Parses `previous`, `cspe` or `pod` with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "previous" => Some(StartStrategy::Previous),
            "cspe" => Some(Self::cspe()),
            "pod" => Some(Self::pod()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StartStrategy::Previous => Ok(()),
            StartStrategy::Cspe { window: 0 } => {
                Err(Error::InvalidArgument("CSPE window must be at least 1".into()))
            }
            StartStrategy::Pod { window, tol_pod } if window == 0 || !(tol_pod >= 1.0) => Err(
                Error::InvalidArgument(format!("POD needs window >= 1 and tol_pod >= 1, got {window}, {tol_pod}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Relative residual below which a pushed vector counts as already spanned.
const DROP_TOL: f64 = 1e-10;

/// Orthonormal basis of recent solutions with cached products `K v`.
///
/// Each push adds at most one column and computes exactly one product with
/// `K`; all older products are reused.
#[derive(Debug, Clone)]
pub struct CspeCache {
    window: usize,
    basis: VecDeque<Vec<f64>>,
    products: VecDeque<Vec<f64>>,
    spmv_count: usize,
}

impl CspeCache {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            basis: VecDeque::new(),
            products: VecDeque::new(),
            spmv_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.basis.iter()
    }

    pub fn products(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.products.iter()
    }

    /// Products with `K` computed so far.
    pub fn spmv_count(&self) -> usize {
        self.spmv_count
    }

    /// Adds `x` to the basis. Returns whether a column was added.
    ///
    /// A vector already in the span is ignored. Otherwise the oldest column
    /// is evicted if the window is full, and the remainder of `x` after
    /// modified Gram–Schmidt against the kept columns is appended.
    pub fn push(&mut self, x: &[f64], k: &CsrMatrix) -> Result<bool> {
        let original = norm2(x);
        if original == 0.0 {
            return Ok(false);
        }
        let basis: Vec<Vec<f64>> = self.basis.iter().cloned().collect();
        let mut v = gram_schmidt_residual(&basis, x);
        if norm2(&v) <= DROP_TOL * original {
            return Ok(false);
        }
        if self.basis.len() == self.window {
            self.basis.pop_front();
            self.products.pop_front();
            let basis: Vec<Vec<f64>> = self.basis.iter().cloned().collect();
            v = gram_schmidt_residual(&basis, x);
        }
        let len = norm2(&v);
        if len <= DROP_TOL * original {
            return Ok(false);
        }
        v.iter_mut().for_each(|c| *c /= len);
        let kv = k.spmv(&v)?;
        self.spmv_count += 1;
        self.basis.push_back(v);
        self.products.push_back(kv);
        Ok(true)
    }

    /// Galerkin start vector `V z` with `(Vᵀ K V) z = Vᵀ r`; zero when empty.
    ///
    /// Uses only cached products. If the projected matrix is numerically
    /// singular, the offending column is dropped and the solve retried once.
    pub fn start(&mut self, r: &[f64]) -> Result<Vec<f64>> {
        for attempt in 0..2 {
            if self.basis.is_empty() {
                return Ok(vec![0.0; r.len()]);
            }
            let m = self.basis.len();
            let g = DMatrix::from_fn(m, m, |i, j| {
                0.5 * (dot(&self.basis[i], &self.products[j]) + dot(&self.basis[j], &self.products[i]))
            });
            let rhs: Vec<f64> = self.basis.iter().map(|v| dot(v, r)).collect();
            match dense_solve_spd(&g, &rhs) {
                Ok(z) => return Ok(combine(self.basis.iter(), &z, r.len())),
                Err(Error::NonPositivePivot { index, .. }) if attempt == 0 => {
                    self.basis.remove(index);
                    self.products.remove(index);
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("loop returns on the second attempt")
    }
}

fn combine<'a>(basis: impl Iterator<Item = &'a Vec<f64>>, z: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (v, &c) in basis.zip(z) {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += c * vi;
        }
    }
    x
}

/// Number of leading singular values kept: the largest `k` with
/// `σ₁ / σ_k <= tol_pod`.
pub fn pod_truncate(sigma: &[f64], tol_pod: f64) -> usize {
    let Some(&first) = sigma.first() else {
        return 0;
    };
    if !(first > 0.0) {
        return 0;
    }
    sigma.iter().take_while(|&&s| s > 0.0 && first / s <= tol_pod).count()
}

/// Snapshot window with a truncated POD basis `U_r` and the reduced matrix
/// `R = U_rᵀ K U_r`, both refreshed on every push.
#[derive(Debug, Clone)]
pub struct PodCache {
    window: usize,
    tol_pod: f64,
    snapshots: VecDeque<Vec<f64>>,
    basis: Vec<Vec<f64>>,
    reduced: DMatrix<f64>,
    sigma: Vec<f64>,
}

impl PodCache {
    pub fn new(window: usize, tol_pod: f64) -> Self {
        Self {
            window: window.max(1),
            tol_pod,
            snapshots: VecDeque::new(),
            basis: Vec::new(),
            reduced: DMatrix::zeros(0, 0),
            sigma: Vec::new(),
        }
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots.len()
    }

    /// Number of retained modes.
    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn reduced_matrix(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    pub fn push(&mut self, x: &[f64], k: &CsrMatrix) -> Result<()> {
        if norm2(x) == 0.0 {
            return Ok(());
        }
        if self.snapshots.len() == self.window {
            self.snapshots.pop_front();
        }
        self.snapshots.push_back(x.to_vec());
        self.refresh(k)
    }

    fn refresh(&mut self, k: &CsrMatrix) -> Result<()> {
        let cols: Vec<Vec<f64>> = self.snapshots.iter().cloned().collect();
        let svd = svd_small(&cols)?;
        let keep = pod_truncate(&svd.sigma, self.tol_pod);
        self.sigma = svd.sigma;
        self.basis = svd.u;
        self.basis.truncate(keep);
        let products: Vec<Vec<f64>> = self.basis.iter().map(|u| k.spmv(u)).collect::<Result<_>>()?;
        let m = self.basis.len();
        self.reduced = DMatrix::from_fn(m, m, |i, j| {
            0.5 * (dot(&self.basis[i], &products[j]) + dot(&self.basis[j], &products[i]))
        });
        Ok(())
    }

    /// `U_r R⁻¹ U_rᵀ r`; zero without modes.
    ///
    /// If `R` is not numerically SPD the trailing (weakest) modes are dropped
    /// until it is.
    pub fn start(&mut self, r: &[f64]) -> Result<Vec<f64>> {
        loop {
            let m = self.basis.len();
            if m == 0 {
                return Ok(vec![0.0; r.len()]);
            }
            let rhs: Vec<f64> = self.basis.iter().map(|u| dot(u, r)).collect();
            match dense_solve_spd(&self.reduced, &rhs) {
                Ok(z) => return Ok(combine(self.basis.iter(), &z, r.len())),
                Err(Error::NonPositivePivot { .. }) => {
                    self.basis.pop();
                    self.reduced = self.reduced.view((0, 0), (m - 1, m - 1)).into_owned();
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Per-purpose start-vector state for one strategy.
#[derive(Debug, Clone)]
pub enum StartVectorSlot {
    /// Always starts from zero.
    Cold,
    Previous(Option<Vec<f64>>),
    Cspe(CspeCache),
    Pod(PodCache),
}

impl StartVectorSlot {
    pub fn new(strategy: &StartStrategy) -> Self {
        match *strategy {
            StartStrategy::Previous => StartVectorSlot::Previous(None),
            StartStrategy::Cspe { window } => StartVectorSlot::Cspe(CspeCache::new(window)),
            StartStrategy::Pod { window, tol_pod } => StartVectorSlot::Pod(PodCache::new(window, tol_pod)),
        }
    }

    pub fn start(&mut self, r: &[f64]) -> Result<Vec<f64>> {
        match self {
            StartVectorSlot::Cold | StartVectorSlot::Previous(None) => Ok(vec![0.0; r.len()]),
            StartVectorSlot::Previous(Some(x)) => Ok(x.clone()),
            StartVectorSlot::Cspe(c) => c.start(r),
            StartVectorSlot::Pod(p) => p.start(r),
        }
    }

    pub fn record(&mut self, solution: &[f64], k: &CsrMatrix) -> Result<()> {
        match self {
            StartVectorSlot::Cold => Ok(()),
            StartVectorSlot::Previous(prev) => {
                *prev = Some(solution.to_vec());
                Ok(())
            }
            StartVectorSlot::Cspe(c) => c.push(solution, k).map(|_| ()),
            StartVectorSlot::Pod(p) => p.push(solution, k),
        }
    }
}
