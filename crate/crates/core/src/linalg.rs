//! Dense real matrix kernel: standardization, covariance, symmetric
//! eigendecomposition via cyclic Jacobi rotations, and SPD solves.
//!
//! Everything here is sized for the ≤ ~40-dimensional views this project
//! works with; no attempt is made at large-scale performance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("row counts differ: {0} vs {1}")]
    RowMismatch(usize, usize),
    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("Jacobi sweeps did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not positive definite (pivot {0:e} at column {1})")]
    NotPositiveDefinite(f64, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// A + ridge * I
    pub fn add_ridge(&self, ridge: f64) -> Matrix {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] += ridge;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Select a subset of columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, indices.len(), |i, j| self[(i, indices[j])])
    }

    /// Select a subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        Matrix::from_fn(indices.len(), self.cols, |i, j| self[(indices[i], j)])
    }

    /// Stack columns of `self` and `other` side by side.
    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        Matrix::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Per-column means and sample standard deviations learned from a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// columns whose sample std was zero; their std is forced to 1
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn apply(&self, x: &Matrix) -> Result<Matrix, LinalgError> {
        if x.n_cols() != self.means.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "standardizer fitted on {} columns, input has {}",
                self.means.len(),
                x.n_cols()
            )));
        }
        Ok(Matrix::from_fn(x.n_rows(), x.n_cols(), |i, j| {
            (x[(i, j)] - self.means[j]) / self.stds[j]
        }))
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if row.len() != self.means.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "standardizer fitted on {} columns, row has {}",
                self.means.len(),
                row.len()
            )));
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Fit per-column mean/std (n−1 convention) and return the z-scored matrix.
/// Constant columns get std 1 and are flagged rather than erroring.
pub fn standardize_fit(x: &Matrix) -> Result<(Standardizer, Matrix), LinalgError> {
    let n = x.n_rows();
    if n < 2 {
        return Err(LinalgError::TooFewRows(n));
    }
    let d = x.n_cols();
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    let mut constant = vec![false; d];
    for j in 0..d {
        let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        let ss = (0..n).map(|i| (x[(i, j)] - mean).powi(2)).sum::<f64>();
        let std = (ss / (n - 1) as f64).sqrt();
        means[j] = mean;
        if std == 0.0 {
            constant[j] = true;
            stds[j] = 1.0;
        } else {
            stds[j] = std;
        }
    }
    let std = Standardizer {
        means,
        stds,
        constant,
    };
    let z = std.apply(x)?;
    Ok((std, z))
}

/// Sample covariance (1/(n−1)) ZᵀZ, symmetrized by averaging with its
/// transpose.
pub fn covariance(z: &Matrix) -> Result<Matrix, LinalgError> {
    let n = z.n_rows();
    if n < 2 {
        return Err(LinalgError::TooFewRows(n));
    }
    let c = z.transpose().matmul(z).scale(1.0 / (n - 1) as f64);
    Ok(c.add(&c.transpose()).scale(0.5))
}

/// Sample cross-covariance (1/(n−1)) Zxᵀ Zy, shape d_x × d_y.
pub fn cross_covariance(zx: &Matrix, zy: &Matrix) -> Result<Matrix, LinalgError> {
    if zx.n_rows() != zy.n_rows() {
        return Err(LinalgError::RowMismatch(zx.n_rows(), zy.n_rows()));
    }
    if zx.n_rows() < 2 {
        return Err(LinalgError::TooFewRows(zx.n_rows()));
    }
    Ok(zx.transpose().matmul(zy).scale(1.0 / (zx.n_rows() - 1) as f64))
}

/// Full spectrum of a symmetric matrix, eigenvalues descending, eigenvector
/// columns paired with them.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition. Converged when every off-diagonal
/// magnitude is ≤ 1e-12 · ‖A‖_F.
pub fn sym_eig(a: &Matrix) -> Result<EigenResult, LinalgError> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "sym_eig needs a square matrix, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let norm = a.frobenius_norm();
    let sym_tol = 1e-10 * norm.max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff > sym_tol {
                return Err(LinalgError::NotSymmetric(diff));
            }
        }
    }

    let mut m = a.add(&a.transpose()).scale(0.5);
    let mut v = Matrix::identity(n);
    let off_tol = 1e-12 * norm.max(f64::MIN_POSITIVE);

    let mut converged = n < 2;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut max_off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                max_off = max_off.max(m[(p, q)].abs());
            }
        }
        if max_off <= off_tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= off_tol {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                // smaller-magnitude root for stability
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        // re-check after the last sweep
        let mut max_off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                max_off = max_off.max(m[(p, q)].abs());
            }
        }
        if max_off > off_tol {
            return Err(LinalgError::NoConvergence(JACOBI_MAX_SWEEPS));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = v.select_columns(&order);
    fix_column_signs(&mut vectors);
    Ok(EigenResult { values, vectors })
}

/// Sign convention: the largest-magnitude entry of every column is positive.
pub fn fix_column_signs(m: &mut Matrix) {
    for j in 0..m.n_cols() {
        let mut best = 0usize;
        for i in 1..m.n_rows() {
            if m[(i, j)].abs() > m[(best, j)].abs() {
                best = i;
            }
        }
        if m.n_rows() > 0 && m[(best, j)] < 0.0 {
            for i in 0..m.n_rows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Cholesky factor L with A = L Lᵀ.
pub fn cholesky(a: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.n_rows();
    assert_eq!(a.n_cols(), n);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite(d, j));
        }
        l[(j, j)] = d.sqrt();
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / l[(j, j)];
        }
    }
    Ok(l)
}

/// Solve A X = B for SPD A via Cholesky; never forms A⁻¹ explicitly.
pub fn chol_solve(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.n_rows() != b.n_rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "A is {}x{}, B has {} rows",
            a.n_rows(),
            a.n_cols(),
            b.n_rows()
        )));
    }
    let l = cholesky(a)?;
    let n = a.n_rows();
    let mut x = Matrix::zeros(n, b.n_cols());
    for col in 0..b.n_cols() {
        // forward: L y = b
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        // back: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// A^(-1/2) for SPD A, via its eigendecomposition.
pub fn inv_sqrt_spd(a: &Matrix) -> Result<Matrix, LinalgError> {
    let eig = sym_eig(a)?;
    let n = a.n_rows();
    if let Some((j, &bad)) = eig
        .values
        .iter()
        .enumerate()
        .find(|(_, &v)| v <= 0.0)
    {
        return Err(LinalgError::NotPositiveDefinite(bad, j));
    }
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let s = 1.0 / eig.values[j].sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    Ok(scaled.matmul(&eig.vectors.transpose()))
}
