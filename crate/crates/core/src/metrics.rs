//! Evaluation metrics over node-stacked predictions.
//!
//! Every function takes `(B·n) × F` matrices with `nodes = n` rows per
//! sample. Per-node quantities are summed within a sample and averaged over
//! samples unless stated otherwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::LayerParams;
use crate::numerics::Matrix;

const CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    Inf,
}

impl Norm {
    fn of(self, v: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::L2 => v.map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Inf => v.fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::Inf => "linf",
        }
    }
}

fn check(a: &Matrix, b: &Matrix, nodes: usize, op: &'static str) -> Result<usize> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if nodes == 0 || !a.rows().is_multiple_of(nodes) || a.rows() == 0 {
        return Err(Error::shape(op, format!("{} rows not a positive multiple of {nodes}", a.rows())));
    }
    Ok(a.rows() / nodes)
}

fn per_node_norm_mean(a: &Matrix, b: &Matrix, nodes: usize, norm: Norm, op: &'static str) -> Result<f64> {
    let samples = check(a, b, nodes, op)?;
    let total: f64 = (0..a.rows())
        .map(|i| norm.of(a.row(i).iter().zip(b.row(i)).map(|(x, y)| x - y)))
        .sum();
    Ok(total / samples as f64)
}

/// Sample mean of the summed per-node ℓ₂ norms `‖f − y‖₂` (not squared).
pub fn mse_loss(preds: &Matrix, labels: &Matrix, nodes: usize) -> Result<f64> {
    per_node_norm_mean(preds, labels, nodes, Norm::L2, "mse_loss")
}

/// Sample mean of the summed per-node squared norms `‖f − y‖₂²`.
pub fn squared_error(preds: &Matrix, labels: &Matrix, nodes: usize) -> Result<f64> {
    let samples = check(preds, labels, nodes, "squared_error")?;
    let total: f64 = preds
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok(total / samples as f64)
}

/// Sample mean of summed per-node cross-entropy; binary when `F = 1`.
pub fn cross_entropy_loss(preds: &Matrix, labels: &Matrix, nodes: usize) -> Result<f64> {
    let samples = check(preds, labels, nodes, "cross_entropy_loss")?;
    let binary = preds.cols() == 1;
    let total: f64 = preds
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(&p, &y)| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            if binary {
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            } else {
                -y * p.ln()
            }
        })
        .sum();
    Ok(total / samples as f64)
}

/// Class of one node row: threshold 0.5 for a single column, otherwise the
/// first index of the maximum.
pub fn node_class(row: &[f64]) -> usize {
    if row.len() == 1 {
        return (row[0] > 0.5) as usize;
    }
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of node-level predictions whose class differs from the label's.
pub fn classification_error(preds: &Matrix, labels: &Matrix) -> Result<f64> {
    check(preds, labels, 1, "classification_error")?;
    let wrong = (0..preds.rows())
        .filter(|&i| node_class(preds.row(i)) != node_class(labels.row(i)))
        .count();
    Ok(wrong as f64 / preds.rows() as f64)
}

/// `‖Θ̂ − Θ*‖_p` over all layers stacked, optionally relative to `‖Θ*‖_p`.
pub fn lp_param_error(theta_hat: &[LayerParams], theta_star: &[LayerParams], p: Norm, relative: bool) -> Result<f64> {
    if theta_hat.len() != theta_star.len() || theta_hat.iter().zip(theta_star).any(|(a, b)| !a.same_shape(b)) {
        return Err(Error::shape("lp_param_error", "parameter shapes differ"));
    }
    let flat = |ps: &[LayerParams]| -> Vec<f64> {
        ps.iter()
            .flat_map(|p| {
                p.weight
                    .as_slice()
                    .iter()
                    .chain(p.bias.as_ref().map(|b| b.as_slice()).unwrap_or(&[]))
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let (a, b) = (flat(theta_hat), flat(theta_star));
    let err = p.of(a.iter().zip(&b).map(|(x, y)| x - y));
    if !relative {
        return Ok(err);
    }
    let denom = p.of(b.iter().copied());
    if denom == 0.0 {
        return Err(Error::InvalidArgument("relative error with zero reference".into()));
    }
    Ok(err / denom)
}

/// Sample mean of summed per-node `‖Ê − E‖_p`; relative (ℓ₂ only) divides by
/// the same quantity computed for `E`.
pub fn lp_model_error(pred: &Matrix, truth: &Matrix, nodes: usize, p: Norm, relative: bool) -> Result<f64> {
    let err = per_node_norm_mean(pred, truth, nodes, p, "lp_model_error")?;
    if !relative {
        return Ok(err);
    }
    if p != Norm::L2 {
        return Err(Error::InvalidArgument("relative model error is defined for p = 2 only".into()));
    }
    let zero = Matrix::zeros(truth.rows(), truth.cols());
    let denom = per_node_norm_mean(truth, &zero, nodes, Norm::L2, "lp_model_error")?;
    if denom == 0.0 {
        return Err(Error::InvalidArgument("relative error with zero reference".into()));
    }
    Ok(err / denom)
}

/// Support-weighted mean of per-class F1 scores over node-level classes.
pub fn weighted_f1(preds: &Matrix, labels: &Matrix) -> Result<f64> {
    check(preds, labels, 1, "weighted_f1")?;
    // class -> (true positives, predicted count, support)
    let mut counts: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for i in 0..preds.rows() {
        let (p, y) = (node_class(preds.row(i)), node_class(labels.row(i)));
        counts.entry(p).or_default().1 += 1;
        let e = counts.entry(y).or_default();
        e.2 += 1;
        if p == y {
            e.0 += 1;
        }
    }
    let total = preds.rows() as f64;
    Ok(counts
        .values()
        .map(|&(tp, predicted, support)| {
            let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            f1 * support as f64 / total
        })
        .sum())
}

/// Bound on `|ℒ̂ − ℒ*|` for binary cross-entropy when every entry of the
/// estimated expectation is within `eps` of the true one `E`:
/// `Σ y ln(E/(E−ε)) + (1−y) ln((1−E)/(1−E−ε))`.
pub fn ce_loss_gap_bound(truth: &Matrix, labels: &Matrix, eps: f64) -> Result<f64> {
    check(truth, labels, 1, "ce_loss_gap_bound")?;
    let mut total = 0.0;
    for (&e, &y) in truth.as_slice().iter().zip(labels.as_slice()) {
        if !(eps >= 0.0 && eps < e.min(1.0 - e)) {
            return Err(Error::InvalidArgument(format!("eps {eps} too large for expectation {e}")));
        }
        total += y * (e / (e - eps)).ln() + (1.0 - y) * ((1.0 - e) / (1.0 - e - eps)).ln();
    }
    Ok(total)
}

/// Named metric values in a stable order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub values: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

/// Everything computable from predictions and labels, plus model recovery
/// against true expectations when given. `mse_gap_relative` compares the MSE
/// loss with the loss of the true expectations.
pub fn evaluate(preds: &Matrix, labels: &Matrix, nodes: usize, truth: Option<&Matrix>) -> Result<MetricReport> {
    let mut r = MetricReport::default();
    r.insert("mse", mse_loss(preds, labels, nodes)?);
    r.insert("squared_error", squared_error(preds, labels, nodes)?);
    r.insert("cross_entropy", cross_entropy_loss(preds, labels, nodes)?);
    r.insert("classification_error", classification_error(preds, labels)?);
    r.insert("weighted_f1", weighted_f1(preds, labels)?);
    if let Some(t) = truth {
        r.insert("model_l2", lp_model_error(preds, t, nodes, Norm::L2, false)?);
        r.insert("model_linf", lp_model_error(preds, t, nodes, Norm::Inf, false)?);
        r.insert("model_l2_relative", lp_model_error(preds, t, nodes, Norm::L2, true)?);
        let reference = mse_loss(t, labels, nodes)?;
        if reference > 0.0 {
            r.insert("mse_gap_relative", (mse_loss(preds, labels, nodes)? - reference).abs() / reference);
        }
    }
    Ok(r)
}
