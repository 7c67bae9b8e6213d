//! AUC, F1, ECE and the composite selection score
//! `S = AUC + 0.5·F1 + 0.5·(1 − ECE)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictions::PredictionSet;
use crate::scalar::Scalar;

pub const DEFAULT_ECE_BINS: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {probs} probabilities vs {labels} labels")]
    LengthMismatch { probs: usize, labels: usize },
    #[error("AUC undefined: labels contain only class {0}")]
    AucUndefined(u8),
    #[error("empty input")]
    EmptyInput,
    #[error("number of bins must be at least 1")]
    ZeroBins,
    #[error("label at index {index} is {value}, expected 0 or 1")]
    InvalidLabel { index: usize, value: u8 },
    #[error("probability at index {0} is not finite")]
    NonFinite(usize),
}

fn check_inputs<T: Scalar>(probs: &[T], labels: &[u8]) -> Result<(), MetricsError> {
    if probs.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            probs: probs.len(),
            labels: labels.len(),
        });
    }
    if let Some(index) = labels.iter().position(|&l| l > 1) {
        return Err(MetricsError::InvalidLabel {
            index,
            value: labels[index],
        });
    }
    if let Some(i) = probs.iter().position(|p| !p.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(())
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counted as one half.
///
/// Runs in `O(n log n)`: after sorting, each tie group contributes
/// `pos_in_group · (negatives below + neg_in_group / 2)` pairs. The count is
/// kept doubled in integers so the only rounding is the final division.
pub fn compute_auc<T: Scalar>(probs: &[T], labels: &[u8]) -> Result<T, MetricsError> {
    check_inputs(probs, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 {
        return Err(MetricsError::AucUndefined(0));
    }
    if n_neg == 0 {
        return Err(MetricsError::AucUndefined(1));
    }

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap_or(Ordering::Equal));

    let mut twice_u: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let value = probs[order[i]];
        let mut pos_here = 0u64;
        let mut neg_here = 0u64;
        while i < order.len() && probs[order[i]] == value {
            if labels[order[i]] == 1 {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            i += 1;
        }
        twice_u += pos_here as u128 * (2 * neg_below as u128 + neg_here as u128);
        neg_below += neg_here;
    }
    let pairs = 2 * n_pos as u128 * n_neg as u128;
    Ok(T::of(twice_u as f64) / T::of(pairs as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Predicted class is 1 iff `prob >= threshold`.
pub fn compute_confusion<T: Scalar>(
    probs: &[T],
    labels: &[u8],
    threshold: T,
) -> Result<ConfusionCounts, MetricsError> {
    check_inputs(probs, labels)?;
    let mut c = ConfusionCounts::default();
    for (&p, &l) in probs.iter().zip(labels) {
        match (p >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2·tp / (2·tp + fp + fn)`, or 0 when nothing is positive in either
/// prediction or truth.
pub fn compute_f1<T: Scalar>(counts: &ConfusionCounts) -> T {
    let den = 2 * counts.tp + counts.fp + counts.fn_;
    if den == 0 {
        T::zero()
    } else {
        T::of_usize(2 * counts.tp) / T::of_usize(den)
    }
}

/// Summary of one confidence interval of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BinStats<T> {
    pub index: usize,
    pub lower: T,
    pub upper: T,
    pub count: usize,
    /// Mean confidence of the bin's samples (0 for an empty bin).
    pub confidence: T,
    /// Fraction of the bin's samples predicted correctly (0 for an empty bin).
    pub accuracy: T,
}

/// Reliability bins over binary confidences `max(p, 1 − p) ∈ [0.5, 1]`.
///
/// Bins have equal width over `[0.5, 1]`, are left-open and right-closed,
/// and the lowest bin also includes 0.5. A confidence within rounding
/// distance of a bin edge (`1e-9` bin widths, widened for `f32`) is snapped
/// onto that edge so that values such as `0.8` land in the bin they are
/// written for.
pub fn reliability_bins<T: Scalar>(
    probs: &[T],
    labels: &[u8],
    n_bins: usize,
) -> Result<Vec<BinStats<T>>, MetricsError> {
    check_inputs(probs, labels)?;
    if n_bins == 0 {
        return Err(MetricsError::ZeroBins);
    }
    if probs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let half = T::of(0.5);
    let snap = (8.0 * n_bins as f64 * T::epsilon().as_f64()).max(1e-9);
    let mut counts = vec![0usize; n_bins];
    let mut conf_sum = vec![T::zero(); n_bins];
    let mut correct = vec![0usize; n_bins];
    for (&p, &l) in probs.iter().zip(labels) {
        let predicted = u8::from(p >= half);
        let conf = if p >= half { p } else { T::one() - p };
        let b = confidence_bin(conf.as_f64(), n_bins, snap);
        counts[b] += 1;
        conf_sum[b] = conf_sum[b] + conf;
        if predicted == l {
            correct[b] += 1;
        }
    }
    let width = 0.5 / n_bins as f64;
    Ok((0..n_bins)
        .map(|b| {
            let (confidence, accuracy) = if counts[b] == 0 {
                (T::zero(), T::zero())
            } else {
                (
                    conf_sum[b] / T::of_usize(counts[b]),
                    T::of_usize(correct[b]) / T::of_usize(counts[b]),
                )
            };
            BinStats {
                index: b,
                lower: T::of(0.5 + width * b as f64),
                upper: T::of(0.5 + width * (b + 1) as f64),
                count: counts[b],
                confidence,
                accuracy,
            }
        })
        .collect())
}

fn confidence_bin(conf: f64, n_bins: usize, snap: f64) -> usize {
    let mut x = (conf - 0.5) * 2.0 * n_bins as f64;
    let nearest = x.round();
    if (x - nearest).abs() < snap {
        x = nearest;
    }
    let idx = x.ceil() as i64 - 1;
    idx.clamp(0, n_bins as i64 - 1) as usize
}

/// Expected calibration error, `Σ_b (n_b / N)·|acc_b − conf_b|`.
pub fn compute_ece<T: Scalar>(
    probs: &[T],
    labels: &[u8],
    n_bins: usize,
) -> Result<T, MetricsError> {
    let bins = reliability_bins(probs, labels, n_bins)?;
    let n = T::of_usize(probs.len());
    Ok(bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| T::of_usize(b.count) / n * (b.accuracy - b.confidence).abs())
        .sum())
}

pub fn overall_score<T: Scalar>(auc: T, f1: T, ece: T) -> T {
    let half = T::of(0.5);
    auc + half * f1 + half * (T::one() - ece)
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricsReport<T> {
    pub model_name: String,
    pub auc: T,
    pub f1: T,
    pub ece: T,
    pub overall: T,
}

impl<T: Scalar> MetricsReport<T> {
    pub fn new(model_name: impl Into<String>, auc: T, f1: T, ece: T) -> Self {
        Self {
            model_name: model_name.into(),
            auc,
            f1,
            ece,
            overall: overall_score(auc, f1, ece),
        }
    }

    /// `auc=… f1=… ece=… S=…` with four decimals.
    pub fn summary_line(&self) -> String {
        format!(
            "auc={:.4} f1={:.4} ece={:.4} S={:.4}",
            self.auc, self.f1, self.ece, self.overall
        )
    }
}

/// Metrics over raw columns at the 0.5 cutoff.
pub fn evaluate_columns<T: Scalar>(
    model_name: &str,
    probs: &[T],
    labels: &[u8],
    n_bins: usize,
) -> Result<MetricsReport<T>, MetricsError> {
    let auc = compute_auc(probs, labels)?;
    let counts = compute_confusion(probs, labels, T::of(DEFAULT_THRESHOLD))?;
    let f1 = compute_f1(&counts);
    let ece = compute_ece(probs, labels, n_bins)?;
    Ok(MetricsReport::new(model_name, auc, f1, ece))
}

pub fn evaluate<T: Scalar>(
    set: &PredictionSet<T>,
    n_bins: usize,
) -> Result<MetricsReport<T>, MetricsError> {
    evaluate_columns(set.model_name(), &set.probs(), &set.labels(), n_bins)
}
