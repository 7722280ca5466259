//! Principal component analysis: top-k eigenvectors of the sample
//! covariance of (optionally standardized) data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Standardizer};

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("k = {k} is out of range for {d} columns")]
    BadK { k: usize, d: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("input has {got} columns, model was fitted on {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("model was fitted without column names")]
    NoNames,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub standardizer: Standardizer,
    /// d × k, orthonormal columns
    pub directions: Matrix,
    /// eigenvalues paired with the directions, descending
    pub explained_variance: Vec<f64>,
    pub k: usize,
    /// z-score before the eigendecomposition (default); false = center only
    pub scaled: bool,
    pub names: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Loading {
    pub variable: String,
    pub weight: f64,
}

impl PcaModel {
    /// Fit with z-scoring enabled (the default for NHANES-scale data whose
    /// units vary wildly).
    pub fn fit(x: &Matrix, k: usize) -> Result<PcaModel, PcaError> {
        Self::fit_opts(x, k, true, None)
    }

    pub fn fit_opts(
        x: &Matrix,
        k: usize,
        scale: bool,
        names: Option<Vec<String>>,
    ) -> Result<PcaModel, PcaError> {
        let d = x.n_cols();
        if k == 0 || k > d {
            return Err(PcaError::BadK { k, d });
        }
        let (mut standardizer, z) = linalg::standardize_fit(x)?;
        let z = if scale {
            z
        } else {
            // centering only: reset stds to 1
            standardizer.stds = vec![1.0; d];
            standardizer.apply(x)?
        };
        let cov = linalg::covariance(&z)?;
        let eig = linalg::sym_eig(&cov)?;
        let directions = eig.vectors.select_columns(&(0..k).collect::<Vec<_>>());
        let explained_variance = eig.values[..k].to_vec();
        Ok(PcaModel {
            standardizer,
            directions,
            explained_variance,
            k,
            scaled: scale,
            names,
        })
    }

    /// Project rows of `x` onto the principal directions; output is n × k.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix, PcaError> {
        if x.n_cols() != self.directions.n_rows() {
            return Err(PcaError::DimensionMismatch {
                got: x.n_cols(),
                want: self.directions.n_rows(),
            });
        }
        let z = self.standardizer.apply(x)?;
        Ok(z.matmul(&self.directions))
    }

    /// Per component, the variable weights sorted by |weight| descending
    /// (ties alphabetical by variable name).
    pub fn loadings(&self) -> Result<Vec<Vec<Loading>>, PcaError> {
        let names = self.names.as_ref().ok_or(PcaError::NoNames)?;
        let mut out = Vec::with_capacity(self.k);
        for comp in 0..self.k {
            let mut list: Vec<Loading> = names
                .iter()
                .enumerate()
                .map(|(j, n)| Loading {
                    variable: n.clone(),
                    weight: self.directions[(j, comp)],
                })
                .collect();
            list.sort_by(|a, b| {
                b.weight
                    .abs()
                    .partial_cmp(&a.weight.abs())
                    .unwrap()
                    .then_with(|| a.variable.cmp(&b.variable))
            });
            out.push(list);
        }
        Ok(out)
    }
}
