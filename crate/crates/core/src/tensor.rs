//! Small dense tensors indexed by chart coordinates (zero-based).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues below this make the metric singular.
pub const MIN_METRIC_EIGENVALUE: f64 = 1e-12;

/// Fisher metric `g_ij` at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor {
    matrix: DMatrix<f64>,
}

impl MetricTensor {
    /// Symmetrizes and checks positive definiteness.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument("metric must be square".into()));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        if eigenvalues
            .iter()
            .any(|e| !e.is_finite() || *e < MIN_METRIC_EIGENVALUE)
        {
            return Err(Error::SingularMetric { eigenvalues });
        }
        Ok(Self { matrix: sym })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        // positive definite by construction
        self.matrix
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| self.matrix.clone().try_inverse().expect("checked SPD"))
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// `g(u, v)`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.matrix * v)[(0, 0)]
    }
}

/// Three-index array `a[i][j][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicTensor {
    n: usize,
    data: Vec<f64>,
}

impl CubicTensor {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t.data[(i * n + j) * n + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest deviation from total symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.get(i, j, k);
                    for w in [
                        self.get(j, i, k),
                        self.get(i, k, j),
                        self.get(k, j, i),
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest deviation from symmetry in the first two indices.
    pub fn lower_pair_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max((self.get(i, j, k) - self.get(j, i, k)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

/// `Γ^k_ij`, stored with the upper index first: `get(k, i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedChristoffel {
    n: usize,
    data: Vec<f64>,
}

impl MixedChristoffel {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    t.data[(k * n + i) * n + j] = f(k, i, j);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Γ^k_ij`.
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `Γ^k_ij u^i v^j`.
    pub fn contract(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += self.get(k, i, j) * u[i] * v[j];
                }
            }
            s
        })
    }

    /// Lowers the upper index with `g`: `Γ_ijl = Γ^s_ij g_sl`.
    pub fn lower(&self, metric: &MetricTensor) -> CubicTensor {
        let n = self.n;
        CubicTensor::from_fn(n, |i, j, l| {
            (0..n).map(|s| self.get(s, i, j) * metric.get(s, l)).sum()
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }

    pub(crate) fn combine(&self, other: &Self, a: f64, b: f64) -> Self {
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }
}

/// `R_ijkl = g(R(∂_i, ∂_j) ∂_k, ∂_l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTensor {
    n: usize,
    data: Vec<f64>,
}

impl CurvatureTensor {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n.pow(4)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let at = self.idx(i, j, k, l);
        self.data[at] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|R_ijkl + R_jikl|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        worst = worst.max((self.get(i, j, k, l) + self.get(j, i, k, l)).abs());
                    }
                }
            }
        }
        worst
    }

    /// `R(X, Y) Z` as a vector, raising the last index with `g⁻¹`.
    pub fn apply(
        &self,
        metric: &MetricTensor,
        x: &DVector<f64>,
        y: &DVector<f64>,
        z: &DVector<f64>,
    ) -> DVector<f64> {
        let n = self.n;
        let lowered = DVector::from_fn(n, |l, _| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        s += self.get(i, j, k, l) * x[i] * y[j] * z[k];
                    }
                }
            }
            s
        });
        metric.inverse() * lowered
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "tensor dimensions differ");
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
