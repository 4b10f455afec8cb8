//! Evaluation metrics over sentiment values in -3..=+3: MAE, 7-class
//! accuracy and weighted F1, binary accuracy and binary F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{ClassValueMap, NUM_CLASSES};

/// One split's metric suite. Serializes to a flat JSON object with exactly
/// these six fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub acc7: f64,
    pub f1_7: f64,
    pub acc2: f64,
    pub f1_binary: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    /// Per-class F1 weighted by true-class support.
    Weighted,
    /// Unweighted mean of per-class F1.
    Macro,
}

/// Reporting knobs. The defaults match the standard conventions used
/// throughout this crate: support-weighted 7-class F1, and neutral (0)
/// counted as nonnegative in the binary metrics.
#[derive(Debug, Clone, Copy)]
pub struct MetricsOptions {
    pub f1_average: F1Average,
    /// Drop samples whose true value is exactly 0 before binary metrics.
    pub exclude_neutral_in_binary: bool,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            f1_average: F1Average::Weighted,
            exclude_neutral_in_binary: false,
        }
    }
}

fn check_pair(preds: &[i32], labels: &[i32]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Contract("metrics over an empty prediction set".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    for &v in preds.iter().chain(labels) {
        ClassValueMap::index_of(v)?;
    }
    Ok(())
}

/// Mean absolute error on the sentiment-value scale.
pub fn mae(preds: &[i32], labels: &[i32]) -> Result<f64> {
    check_pair(preds, labels)?;
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &l)| (p - l).abs() as f64)
        .sum();
    Ok(total / preds.len() as f64)
}

/// Fraction of exact 7-class matches.
pub fn acc7(preds: &[i32], labels: &[i32]) -> Result<f64> {
    check_pair(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Averaged per-class F1 over class indices in `0..n_classes`. A class with
/// P + R = 0 contributes F1 = 0. Weighted mode weights by true support, so
/// classes absent from the truth contribute nothing.
pub fn f1_averaged_indices(
    pred_idx: &[usize],
    true_idx: &[usize],
    n_classes: usize,
    average: F1Average,
) -> Result<f64> {
    if pred_idx.is_empty() || pred_idx.len() != true_idx.len() {
        return Err(Error::Contract(format!(
            "f1 over {} predictions vs {} labels",
            pred_idx.len(),
            true_idx.len()
        )));
    }
    for &i in pred_idx.iter().chain(true_idx) {
        if i >= n_classes {
            return Err(Error::Index(format!(
                "class index {i} out of 0..{n_classes}"
            )));
        }
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fe = vec![0usize; n_classes];
    for (&p, &t) in pred_idx.iter().zip(true_idx) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fe[t] += 1;
        }
    }
    let f1_of = |c: usize| -> f64 {
        let denom = 2 * tp[c] + fp[c] + fe[c];
        if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        }
    };
    match average {
        F1Average::Weighted => {
            let n = pred_idx.len() as f64;
            Ok((0..n_classes)
                .map(|c| (tp[c] + fe[c]) as f64 / n * f1_of(c))
                .sum())
        }
        F1Average::Macro => {
            Ok((0..n_classes).map(f1_of).sum::<f64>() / n_classes as f64)
        }
    }
}

/// Support-weighted 7-class F1 on sentiment values.
pub fn f1_weighted(preds: &[i32], labels: &[i32]) -> Result<f64> {
    check_pair(preds, labels)?;
    let p: Vec<usize> = preds
        .iter()
        .map(|&v| ClassValueMap::index_of(v))
        .collect::<Result<_>>()?;
    let t: Vec<usize> = labels
        .iter()
        .map(|&v| ClassValueMap::index_of(v))
        .collect::<Result<_>>()?;
    f1_averaged_indices(&p, &t, NUM_CLASSES, F1Average::Weighted)
}

/// Polarity split: values < 0 are negative, values >= 0 (neutral included)
/// are nonnegative. Returns true for nonnegative.
pub fn binarize(values: &[i32]) -> Result<Vec<bool>> {
    for &v in values {
        ClassValueMap::index_of(v)?;
    }
    Ok(values.iter().map(|&v| v >= 0).collect())
}

/// Single-class F1 with `true` (nonnegative) as the positive class.
fn binary_f1(pred: &[bool], truth: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fe = 0usize;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fe += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fe;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Assemble all five metrics with the default conventions.
pub fn report(preds: &[i32], labels: &[i32]) -> Result<MetricsReport> {
    report_with(preds, labels, &MetricsOptions::default())
}

pub fn report_with(
    preds: &[i32],
    labels: &[i32],
    options: &MetricsOptions,
) -> Result<MetricsReport> {
    check_pair(preds, labels)?;
    let p_idx: Vec<usize> = preds
        .iter()
        .map(|&v| ClassValueMap::index_of(v))
        .collect::<Result<_>>()?;
    let t_idx: Vec<usize> = labels
        .iter()
        .map(|&v| ClassValueMap::index_of(v))
        .collect::<Result<_>>()?;

    let (bin_pred, bin_true): (Vec<bool>, Vec<bool>) = if options.exclude_neutral_in_binary {
        preds
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l != 0)
            .map(|(&p, &l)| (p >= 0, l >= 0))
            .unzip()
    } else {
        (binarize(preds)?, binarize(labels)?)
    };
    let (acc2, f1_binary) = if bin_pred.is_empty() {
        (0.0, 0.0)
    } else {
        let hits = bin_pred
            .iter()
            .zip(&bin_true)
            .filter(|(p, t)| p == t)
            .count();
        (
            hits as f64 / bin_pred.len() as f64,
            binary_f1(&bin_pred, &bin_true),
        )
    };

    Ok(MetricsReport {
        mae: mae(preds, labels)?,
        acc7: acc7(preds, labels)?,
        f1_7: f1_averaged_indices(&p_idx, &t_idx, NUM_CLASSES, options.f1_average)?,
        acc2,
        f1_binary,
        n_samples: preds.len(),
    })
}
