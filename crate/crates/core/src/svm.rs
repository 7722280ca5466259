//! SVM classification via Sequential Minimal Optimization, plus the
//! stratified cross-validation and grid-search harness around it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval;
use crate::linalg::{self, Matrix, Standardizer};

pub const DEFAULT_TOL: f64 = 1e-3;
const ALPHA_EPS: f64 = 1e-12;
/// above this many training rows the full kernel matrix is not cached
const KERNEL_CACHE_LIMIT: usize = 4000;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training set contains a single class")]
    SingleClass,
    #[error("labels must be ±1, found {0}")]
    BadLabel(f64),
    #[error("need at least {need} samples per class for {k}-fold CV, class has {got}")]
    TooFewPerClass { need: usize, k: usize, got: usize },
    #[error("input has {got} features, model was trained on {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("labels and rows differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("every grid cell failed; last error: {0}")]
    AllCellsFailed(String),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    /// ordering used by the grid-search tie rule: linear before rbf
    fn kind_rank(&self) -> u8 {
        match self {
            KernelSpec::Linear => 0,
            KernelSpec::Rbf { .. } => 1,
        }
    }

    fn gamma_or_zero(&self) -> f64 {
        match self {
            KernelSpec::Linear => 0.0,
            KernelSpec::Rbf { gamma } => *gamma,
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub support_vectors: Matrix,
    /// α_i · y_i per support vector
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub feature_standardizer: Standardizer,
    /// set when the SMO iteration cap was hit before all KKT violations
    /// dropped below tol
    pub converged: bool,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.feature_standardizer.means.len()
    }

    /// Raw decision values f(x) = Σ αᵢyᵢ K(xᵢ, x) + b.
    pub fn decision_scores(&self, x: &Matrix) -> Result<Vec<f64>, SvmError> {
        if x.n_rows() > 0 && x.n_cols() != self.n_features() {
            return Err(SvmError::DimensionMismatch {
                got: x.n_cols(),
                want: self.n_features(),
            });
        }
        let mut out = Vec::with_capacity(x.n_rows());
        for i in 0..x.n_rows() {
            let z = self.feature_standardizer.apply_row(x.row(i))?;
            let mut f = self.bias;
            for (sv, coef) in (0..self.support_vectors.n_rows()).zip(&self.dual_coefs) {
                f += coef * self.kernel.eval(self.support_vectors.row(sv), &z);
            }
            out.push(f);
        }
        Ok(out)
    }

    /// Label prediction; a score of exactly 0 maps to +1.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, SvmError> {
        Ok(self
            .decision_scores(x)?
            .into_iter()
            .map(|s| if s >= 0.0 { 1.0 } else { -1.0 })
            .collect())
    }

    /// Weight vector w = Σ αᵢyᵢ xᵢ in *standardized* feature space.
    /// Only defined for the linear kernel.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if !self.kernel.is_linear() {
            return None;
        }
        let d = self.support_vectors.n_cols();
        let mut w = vec![0.0; d];
        for (i, coef) in self.dual_coefs.iter().enumerate() {
            for (j, wj) in w.iter_mut().enumerate() {
                *wj += coef * self.support_vectors[(i, j)];
            }
        }
        Some(w)
    }
}

fn check_labels(y: &[f64]) -> Result<(), SvmError> {
    let mut pos = false;
    let mut neg = false;
    for &l in y {
        if l == 1.0 {
            pos = true;
        } else if l == -1.0 {
            neg = true;
        } else {
            return Err(SvmError::BadLabel(l));
        }
    }
    if !(pos && neg) {
        return Err(SvmError::SingleClass);
    }
    Ok(())
}

struct Smo<'a> {
    z: &'a Matrix,
    y: &'a [f64],
    kernel: KernelSpec,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    bias: f64,
    errors: Vec<f64>,
    cache: Option<Vec<f64>>, // n×n kernel matrix when small enough
    n: usize,
    steps: usize,
    step_cap: usize,
}

impl<'a> Smo<'a> {
    fn new(z: &'a Matrix, y: &'a [f64], kernel: KernelSpec, c: f64, tol: f64) -> Self {
        let n = z.n_rows();
        let cache = if n <= KERNEL_CACHE_LIMIT {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(z.row(i), z.row(j));
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
            Some(k)
        } else {
            None
        };
        Smo {
            z,
            y,
            kernel,
            c,
            tol,
            alpha: vec![0.0; n],
            bias: 0.0,
            errors: y.iter().map(|&l| -l).collect(),
            cache,
            n,
            steps: 0,
            step_cap: 100 * n,
        }
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        match &self.cache {
            Some(c) => c[i * self.n + j],
            None => self.kernel.eval(self.z.row(i), self.z.row(j)),
        }
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (low, high) = if s < 0.0 {
            ((a2 - a1).max(0.0), (self.c + a2 - a1).min(self.c))
        } else {
            ((a2 + a1 - self.c).max(0.0), (a2 + a1).min(self.c))
        };
        if (high - low) < 1e-12 {
            return false;
        }
        let k11 = self.k(i1, i1);
        let k12 = self.k(i1, i2);
        let k22 = self.k(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2_new = if eta > 1e-12 {
            (a2 + y2 * (e1 - e2) / eta).clamp(low, high)
        } else {
            // flat direction: move to the better bound
            let f1 = y2 * (e1 - e2);
            if f1 > 0.0 {
                high
            } else {
                low
            }
        };
        if a2_new < ALPHA_EPS {
            a2_new = 0.0;
        } else if a2_new > self.c - ALPHA_EPS {
            a2_new = self.c;
        }
        if (a2_new - a2).abs() < 1e-12 * (a2_new + a2 + 1e-12) {
            return false;
        }
        let a1_new = a1 + s * (a2 - a2_new);
        let d1 = a1_new - a1;
        let d2 = a2_new - a2;

        let b1 = self.bias - e1 - y1 * d1 * k11 - y2 * d2 * k12;
        let b2 = self.bias - e2 - y1 * d1 * k12 - y2 * d2 * k22;
        let new_bias = if a1_new > 0.0 && a1_new < self.c {
            b1
        } else if a2_new > 0.0 && a2_new < self.c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let db = new_bias - self.bias;

        for i in 0..self.n {
            self.errors[i] += y1 * d1 * self.k(i1, i) + y2 * d2 * self.k(i2, i) + db;
        }
        self.alpha[i1] = a1_new;
        self.alpha[i2] = a2_new;
        self.bias = new_bias;
        self.steps += 1;
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        let violates =
            (r2 < -self.tol && a2 < self.c - ALPHA_EPS) || (r2 > self.tol && a2 > ALPHA_EPS);
        if !violates {
            return false;
        }
        // second choice: maximize |E1 - E2| over non-bound points
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.n {
            if self.alpha[i] > ALPHA_EPS && self.alpha[i] < self.c - ALPHA_EPS {
                let gap = (self.errors[i] - e2).abs();
                if best.map(|(_, g)| gap > g).unwrap_or(true) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        // fall back over non-bound then all points
        for i1 in 0..self.n {
            if self.alpha[i1] > ALPHA_EPS
                && self.alpha[i1] < self.c - ALPHA_EPS
                && self.take_step(i1, i2)
            {
                return true;
            }
        }
        for i1 in 0..self.n {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    fn run(&mut self) -> bool {
        let mut examine_all = true;
        loop {
            let mut changed = 0usize;
            for i in 0..self.n {
                if self.steps >= self.step_cap {
                    return false;
                }
                let non_bound =
                    self.alpha[i] > ALPHA_EPS && self.alpha[i] < self.c - ALPHA_EPS;
                if (examine_all || non_bound) && self.examine(i) {
                    changed += 1;
                }
            }
            if examine_all {
                if changed == 0 {
                    return true;
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
        }
    }
}

/// Train an SVM with SMO until every KKT violation is ≤ `tol`.
///
/// Features are standardized internally; the fitted standardizer travels
/// with the model. Hitting the 100·n step cap is reported via the model's
/// `converged` flag, not an error.
pub fn svm_train(
    x: &Matrix,
    y: &[f64],
    kernel: KernelSpec,
    c: f64,
    tol: f64,
) -> Result<SvmModel, SvmError> {
    if x.n_rows() != y.len() {
        return Err(SvmError::LengthMismatch(x.n_rows(), y.len()));
    }
    check_labels(y)?;
    let (std, z) = linalg::standardize_fit(x)?;
    let mut smo = Smo::new(&z, y, kernel, c, tol);
    let converged = smo.run();

    let kept: Vec<usize> = (0..smo.n).filter(|&i| smo.alpha[i] > ALPHA_EPS).collect();
    let support_vectors = z.select_rows(&kept);
    let dual_coefs: Vec<f64> = kept.iter().map(|&i| smo.alpha[i] * y[i]).collect();
    Ok(SvmModel {
        kernel,
        support_vectors,
        dual_coefs,
        bias: smo.bias,
        c,
        feature_standardizer: std,
        converged,
    })
}

/// Stratified k-fold assignment. Folds partition 0..n with per-fold class
/// proportions within one sample of the global proportions.
pub fn stratified_kfold(y: &[f64], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, SvmError> {
    check_labels(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < k {
            return Err(SvmError::TooFewPerClass {
                need: k,
                k,
                got: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[pos % k].push(i);
        }
    }
    Ok(folds)
}

/// Stratified split into (train, test) index lists with |train| within one
/// sample of `fraction`·n per class.
pub fn train_test_split(
    y: &[f64],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), SvmError> {
    check_labels(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_train = (fraction * idx.len() as f64).round() as usize;
        let n_train = n_train.clamp(1, idx.len().saturating_sub(1).max(1));
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCellScore {
    pub kernel: KernelSpec,
    pub c: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
    /// present when the cell failed to train on some fold
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_kernel: KernelSpec,
    pub best_c: f64,
    pub cv_scores: Vec<GridCellScore>,
    pub folds: usize,
}

/// Mean 5-fold CV ROC-AUC per grid cell; best = argmax mean AUC with the
/// tie rule smaller C, then smaller gamma, then linear before rbf.
pub fn grid_search(
    x: &Matrix,
    y: &[f64],
    grid: &[(KernelSpec, f64)],
    seed: u64,
    tol: f64,
) -> Result<GridSearchResult, SvmError> {
    assert!(!grid.is_empty(), "grid must be nonempty");
    let folds = stratified_kfold(y, 5, seed)?;
    let mut scores = Vec::with_capacity(grid.len());
    let mut last_err = String::new();
    for &(kernel, c) in grid {
        let mut fold_aucs = Vec::with_capacity(folds.len());
        let mut failure = None;
        for held_out in 0..folds.len() {
            let test_idx = &folds[held_out];
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(f, _)| *f != held_out)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let xt = x.select_rows(&train_idx);
            let yt: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
            let xv = x.select_rows(test_idx);
            let yv: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();
            let outcome = svm_train(&xt, &yt, kernel, c, tol)
                .and_then(|m| Ok((m.decision_scores(&xv)?, yv)));
            match outcome {
                Ok((scores_v, yv)) => match eval::roc_auc(&yv, &scores_v) {
                    Ok(roc) => fold_aucs.push(roc.auc),
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                },
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        let (mean, std) = if failure.is_none() && !fold_aucs.is_empty() {
            let m = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
            let v = fold_aucs.iter().map(|a| (a - m).powi(2)).sum::<f64>()
                / fold_aucs.len() as f64;
            (m, v.sqrt())
        } else {
            last_err = failure.clone().unwrap_or_default();
            (f64::NEG_INFINITY, 0.0)
        };
        scores.push(GridCellScore {
            kernel,
            c,
            mean_auc: mean,
            std_auc: std,
            failure,
        });
    }
    let best = scores
        .iter()
        .filter(|s| s.failure.is_none())
        .min_by(|a, b| {
            b.mean_auc
                .partial_cmp(&a.mean_auc)
                .unwrap()
                .then_with(|| a.c.partial_cmp(&b.c).unwrap())
                .then_with(|| {
                    a.kernel
                        .gamma_or_zero()
                        .partial_cmp(&b.kernel.gamma_or_zero())
                        .unwrap()
                })
                .then_with(|| a.kernel.kind_rank().cmp(&b.kernel.kind_rank()))
        })
        .ok_or(SvmError::AllCellsFailed(last_err))?;
    Ok(GridSearchResult {
        best_kernel: best.kernel,
        best_c: best.c,
        cv_scores: scores.clone(),
        folds: 5,
    })
}

/// The default hyperparameter grid: standard log grid over C and gamma,
/// linear and RBF kernels.
pub fn default_grid() -> Vec<(KernelSpec, f64)> {
    let cs = [0.1, 1.0, 10.0, 100.0];
    let gammas = [0.001, 0.01, 0.1, 1.0];
    let mut grid = Vec::new();
    for &c in &cs {
        grid.push((KernelSpec::Linear, c));
    }
    for &gamma in &gammas {
        for &c in &cs {
            grid.push((KernelSpec::Rbf { gamma }, c));
        }
    }
    grid
}

/// KKT check for a trained model against its training data. Returns the
/// worst violation found (0 when fully satisfied).
pub fn kkt_violation(model: &SvmModel, x: &Matrix, y: &[f64]) -> Result<f64, SvmError> {
    let scores = model.decision_scores(x)?;
    // recover per-training-point alpha from the stored support vectors
    let z = model.feature_standardizer.apply(x)?;
    let mut worst: f64 = 0.0;
    for i in 0..x.n_rows() {
        let zi = z.row(i);
        // find alpha for this point: match against stored SVs
        let mut alpha = 0.0;
        for (s, coef) in (0..model.support_vectors.n_rows()).zip(&model.dual_coefs) {
            let sv = model.support_vectors.row(s);
            if sv
                .iter()
                .zip(zi)
                .all(|(a, b)| (a - b).abs() <= 1e-12)
            {
                alpha = coef * y[i]; // coef = alpha * y
                break;
            }
        }
        let margin = y[i] * scores[i];
        let v = if alpha <= ALPHA_EPS {
            (1.0 - margin).max(0.0) // y f >= 1 - tol
        } else if alpha >= model.c - ALPHA_EPS {
            (margin - 1.0).max(0.0) // y f <= 1 + tol
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    Ok(worst)
}
