//! Canonical correlation analysis over two row-paired views.
//!
//! The nonsymmetric product Σxx⁻¹ Σxy Σyy⁻¹ Σyx has the same spectrum as
//! the symmetric M = Σxx^(-1/2) Σxy Σyy⁻¹ Σyx Σxx^(-1/2); the fit solves M
//! with the Jacobi eigensolver and maps eigenvectors back through
//! Σxx^(-1/2), which keeps every step verifiable with residual checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Standardizer};

pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CcaError {
    #[error("views have {0} and {1} rows; CCA needs row-paired views")]
    RowMismatch(usize, usize),
    #[error("k = {k} is out of range for views of widths {dx} and {dy}")]
    BadK { k: usize, dx: usize, dy: usize },
    #[error("covariance of a view is not positive definite ({0}); raise the ridge parameter")]
    NotPositiveDefinite(String),
    #[error(transparent)]
    Linalg(LinalgError),
    #[error("input has {got} columns, fitted view has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("model was fitted without column names")]
    NoNames,
}

impl From<LinalgError> for CcaError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::NotPositiveDefinite(..) => CcaError::NotPositiveDefinite(e.to_string()),
            other => CcaError::Linalg(other),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcaModel {
    pub std_x: Standardizer,
    pub std_y: Standardizer,
    /// d_x × k projection basis for the X view
    pub u: Matrix,
    /// d_y × k projection basis for the Y view
    pub v: Matrix,
    /// canonical correlations, descending, clamped to [0, 1]
    pub correlations: Vec<f64>,
    pub ridge: f64,
    pub names_x: Option<Vec<String>>,
    pub names_y: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairedLoading {
    pub variable: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentLoadings {
    pub correlation: f64,
    pub x: Vec<PairedLoading>,
    pub y: Vec<PairedLoading>,
}

impl CcaModel {
    pub fn fit(x: &Matrix, y: &Matrix, k: usize, ridge: f64) -> Result<CcaModel, CcaError> {
        Self::fit_named(x, y, k, ridge, None, None)
    }

    pub fn fit_named(
        x: &Matrix,
        y: &Matrix,
        k: usize,
        ridge: f64,
        names_x: Option<Vec<String>>,
        names_y: Option<Vec<String>>,
    ) -> Result<CcaModel, CcaError> {
        if x.n_rows() != y.n_rows() {
            return Err(CcaError::RowMismatch(x.n_rows(), y.n_rows()));
        }
        let (dx, dy) = (x.n_cols(), y.n_cols());
        if k == 0 || k > dx.min(dy) {
            return Err(CcaError::BadK { k, dx, dy });
        }
        let (std_x, zx) = linalg::standardize_fit(x)?;
        let (std_y, zy) = linalg::standardize_fit(y)?;

        let sxx = linalg::covariance(&zx)?;
        let syy = linalg::covariance(&zy)?;
        let sxy = linalg::cross_covariance(&zx, &zy)?;
        let syx = sxy.transpose();

        let sxx_r = sxx.add_ridge(ridge);
        let syy_r = syy.add_ridge(ridge);

        let sxx_inv_sqrt = linalg::inv_sqrt_spd(&sxx_r)?;
        // Σyy⁻¹ Σyx via solve, never an explicit inverse
        let syy_inv_syx = linalg::chol_solve(&syy_r, &syx)?;
        let m = sxx_inv_sqrt
            .matmul(&sxy)
            .matmul(&syy_inv_syx)
            .matmul(&sxx_inv_sqrt);
        let m = m.add(&m.transpose()).scale(0.5);
        let eig = linalg::sym_eig(&m)?;

        let mut u = Matrix::zeros(dx, k);
        let mut v = Matrix::zeros(dy, k);
        let mut correlations = Vec::with_capacity(k);
        for comp in 0..k {
            let lambda = eig.values[comp].clamp(0.0, 1.0);
            let corr = lambda.sqrt();
            let w = eig.vectors.col(comp);
            let mut u_col = sxx_inv_sqrt.mat_vec(&w);
            let mut v_col = if corr > 1e-12 {
                let u_mat = Matrix::from_rows(u_col.iter().map(|&c| vec![c]).collect());
                let yv = syy_inv_syx.matmul(&u_mat);
                (0..dy).map(|i| yv[(i, 0)] / corr).collect::<Vec<f64>>()
            } else {
                vec![0.0; dy]
            };
            // rescale to unit projection variance on the unridged training
            // covariance, which is what the constraint actually states
            let ux = quad_form(&sxx, &u_col);
            if ux > 1e-12 {
                let s = 1.0 / ux.sqrt();
                u_col.iter_mut().for_each(|c| *c *= s);
            }
            let vy = quad_form(&syy, &v_col);
            if vy > 1e-12 {
                let s = 1.0 / vy.sqrt();
                v_col.iter_mut().for_each(|c| *c *= s);
            }
            // sign convention: largest-|weight| X-side entry positive, V
            // re-signed jointly so the correlation stays nonnegative
            let flip = u_col
                .iter()
                .cloned()
                .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
                .map(|m| m < 0.0)
                .unwrap_or(false);
            if flip {
                u_col.iter_mut().for_each(|c| *c = -*c);
                v_col.iter_mut().for_each(|c| *c = -*c);
            }
            for i in 0..dx {
                u[(i, comp)] = u_col[i];
            }
            for i in 0..dy {
                v[(i, comp)] = v_col[i];
            }
            correlations.push(corr);
        }

        Ok(CcaModel {
            std_x,
            std_y,
            u,
            v,
            correlations,
            ridge,
            names_x,
            names_y,
        })
    }

    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    /// Project X-view rows (which may be rows never seen in fit — this is
    /// exactly how the ALL variants extend the components to unpaired data).
    pub fn transform_x(&self, x: &Matrix) -> Result<Matrix, CcaError> {
        if x.n_cols() != self.u.n_rows() {
            return Err(CcaError::DimensionMismatch {
                got: x.n_cols(),
                want: self.u.n_rows(),
            });
        }
        Ok(self.std_x.apply(x)?.matmul(&self.u))
    }

    pub fn transform_y(&self, y: &Matrix) -> Result<Matrix, CcaError> {
        if y.n_cols() != self.v.n_rows() {
            return Err(CcaError::DimensionMismatch {
                got: y.n_cols(),
                want: self.v.n_rows(),
            });
        }
        Ok(self.std_y.apply(y)?.matmul(&self.v))
    }

    /// Paired (variable, weight) lists per component for both views.
    pub fn loadings(&self) -> Result<Vec<ComponentLoadings>, CcaError> {
        let names_x = self.names_x.as_ref().ok_or(CcaError::NoNames)?;
        let names_y = self.names_y.as_ref().ok_or(CcaError::NoNames)?;
        let mut out = Vec::with_capacity(self.k());
        for comp in 0..self.k() {
            let collect = |names: &[String], basis: &Matrix| {
                let mut list: Vec<PairedLoading> = names
                    .iter()
                    .enumerate()
                    .map(|(j, n)| PairedLoading {
                        variable: n.clone(),
                        weight: basis[(j, comp)],
                    })
                    .collect();
                list.sort_by(|a, b| {
                    b.weight
                        .abs()
                        .partial_cmp(&a.weight.abs())
                        .unwrap()
                        .then_with(|| a.variable.cmp(&b.variable))
                });
                list
            };
            out.push(ComponentLoadings {
                correlation: self.correlations[comp],
                x: collect(names_x, &self.u),
                y: collect(names_y, &self.v),
            });
        }
        Ok(out)
    }
}

fn quad_form(a: &Matrix, v: &[f64]) -> f64 {
    a.mat_vec(v).iter().zip(v).map(|(x, y)| x * y).sum()
}

/// Sample Pearson correlation between two equally long slices.
pub fn sample_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va.sqrt() * vb.sqrt())
    }
}
