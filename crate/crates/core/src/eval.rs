//! Clinical evaluation metrics and linear-SVM feature ranking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::svm::SvmModel;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("truth and prediction lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("both classes must be present")]
    SingleClass,
    #[error("feature ranking needs a linear kernel")]
    NotLinearKernel,
    #[error("{got} names for {want} features")]
    NameCountMismatch { got: usize, want: usize },
    #[error("inputs must be nonempty")]
    Empty,
}

/// A ratio metric that may be undefined (zero denominator). Undefined is
/// flagged, never silently reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Defined(f64),
    Undefined,
}

impl Metric {
    fn ratio(num: usize, den: usize) -> Metric {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Defined(v) => Some(*v),
            Metric::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub sensitivity: Metric,
    pub specificity: Metric,
    pub ppv: Metric,
    pub npv: Metric,
}

/// Sensitivity, specificity, PPV and NPV from ±1 truth/prediction vectors.
/// The raw confusion counts ride along for auditability.
pub fn confusion_metrics(truth: &[f64], predicted: &[f64]) -> Result<ConfusionMetrics, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t > 0.0, p > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ConfusionMetrics {
        tp,
        fp,
        tn,
        fn_,
        sensitivity: Metric::ratio(tp, tp + fn_),
        specificity: Metric::ratio(tn, tn + fp),
        ppv: Metric::ratio(tp, tp + fp),
        npv: Metric::ratio(tn, tn + fn_),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    pub auc: f64,
    /// (FPR, TPR) at every distinct score threshold, from (0,0) to (1,1)
    pub points: Vec<RocPoint>,
}

/// ROC-AUC in the Mann-Whitney formulation: the fraction of
/// positive/negative pairs the scores order correctly, ties half-credited.
pub fn roc_auc(truth: &[f64], scores: &[f64]) -> Result<RocCurve, EvalError> {
    if truth.len() != scores.len() {
        return Err(EvalError::LengthMismatch(truth.len(), scores.len()));
    }
    let p = truth.iter().filter(|&&t| t > 0.0).count();
    let n = truth.len() - p;
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass);
    }

    // rank-sum with average ranks over ties
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if truth[idx] > 0.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let auc = (rank_sum_pos - (p * (p + 1)) as f64 / 2.0) / (p * n) as f64;

    // ROC points at every distinct threshold, descending
    let mut desc = order.clone();
    desc.reverse();
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < desc.len() {
        let mut j = i;
        while j + 1 < desc.len() && scores[desc[j + 1]] == scores[desc[i]] {
            j += 1;
        }
        for &idx in &desc[i..=j] {
            if truth[idx] > 0.0 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
        i = j + 1;
    }
    Ok(RocCurve { auc, points })
}

/// Trapezoidal area under a ROC point list; used as the cross-check route
/// against the Mann-Whitney value.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Feature names ordered by |w_j| of the linear decision function expressed
/// in *original* units (standardizer scale composed in). Ties alphabetical.
pub fn rank_features_by_weight(
    model: &SvmModel,
    names: &[String],
) -> Result<Vec<String>, EvalError> {
    let w_std = model.linear_weights().ok_or(EvalError::NotLinearKernel)?;
    if names.len() != w_std.len() {
        return Err(EvalError::NameCountMismatch {
            got: names.len(),
            want: w_std.len(),
        });
    }
    let mut ranked: Vec<(String, f64)> = names
        .iter()
        .cloned()
        .zip(
            w_std
                .iter()
                .zip(&model.feature_standardizer.stds)
                .map(|(w, s)| w / s),
        )
        .collect();
    ranked.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked.into_iter().map(|(n, _)| n).collect())
}

/// Self-contained SVG of a ROC curve: axes, diagonal, polyline. No external
/// assets.
pub fn roc_svg(curve: &RocCurve, title: &str) -> String {
    let w = 480.0;
    let h = 480.0;
    let margin = 50.0;
    let plot = w - 2.0 * margin;
    let x = |fpr: f64| margin + fpr * plot;
    let y = |tpr: f64| h - margin - tpr * plot;
    let path: String = curve
        .points
        .iter()
        .map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr)))
        .collect::<Vec<_>>()
        .join(" ");
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title} (AUC = {auc:.3})</text>\n",
            "<line x1=\"{m}\" y1=\"{ym}\" x2=\"{xm}\" y2=\"{ym}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{ym}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{ym}\" x2=\"{xm}\" y2=\"{m}\" stroke=\"lightgray\" stroke-dasharray=\"4\"/>\n",
            "<text x=\"{tx}\" y=\"{lx}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">False positive rate</text>\n",
            "<text x=\"16\" y=\"{ty}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {ty})\">True positive rate</text>\n",
            "<polyline points=\"{path}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        m = margin,
        xm = w - margin,
        ym = h - margin,
        tx = w / 2.0,
        ty = h / 2.0,
        lx = h - 14.0,
        title = title,
        auc = curve.auc,
        path = path,
    )
}

/// One row of the per-model results table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub model_name: String,
    pub scheme: String,
    pub data_size: usize,
    pub sensitivity: Metric,
    pub specificity: Metric,
    pub ppv: Metric,
    pub npv: Metric,
    pub auc: Metric,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ClassificationReport {
    pub fn csv_header() -> &'static str {
        "model,scheme,data_size,sensitivity,specificity,ppv,npv,auc,tp,fp,tn,fn"
    }

    pub fn csv_row(&self) -> String {
        let fmt = |m: &Metric| match m {
            Metric::Defined(v) => format!("{v:.6}"),
            Metric::Undefined => "undefined".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.model_name,
            self.scheme,
            self.data_size,
            fmt(&self.sensitivity),
            fmt(&self.specificity),
            fmt(&self.ppv),
            fmt(&self.npv),
            fmt(&self.auc),
            self.tp,
            self.fp,
            self.tn,
            self.fn_
        )
    }
}
