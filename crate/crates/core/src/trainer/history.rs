use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::network::LayerParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub iter: usize,
    pub split: Split,
    pub metrics: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub iter: usize,
    pub params: Vec<LayerParams>,
}

/// Everything recorded during one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
    pub snapshots: Vec<Snapshot>,
    /// SHA-256 of the batch index sequence consumed by the run.
    pub batch_hash: String,
    /// SHA-256 of the initial parameters.
    pub init_hash: String,
    /// Modulus used by the adaptive schedule, if any.
    pub kappa: Option<f64>,
    /// Step size used by operator extrapolation, if any.
    pub oe_gamma: Option<f64>,
    /// Index `R` of the returned operator-extrapolation iterate.
    pub selected_iterate: Option<usize>,
    pub iterations: usize,
}

impl TrainHistory {
    /// Last recorded value of `metric` on `split`.
    pub fn final_metric(&self, split: Split, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .rev()
            .find(|r| r.split == split)
            .and_then(|r| r.metrics.get(metric))
    }

    /// Long-format `epoch,iter,split,metric,value` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,iter,split,metric,value\n");
        for r in &self.records {
            for (name, v) in &r.metrics.values {
                let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.iter, r.split.name(), name, v);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One row of the neuron trajectory table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicsRow {
    pub snapshot: usize,
    pub neuron: usize,
    /// `⟨w, w⁰⟩ / ‖w⁰‖` for the neuron's first-layer weight column.
    pub signed_norm: f64,
    pub out_weight: f64,
}

/// Per snapshot and hidden neuron of a two-layer scalar-output network: the
/// first-layer weight projected on its initial direction and the neuron's
/// output weight.
pub fn dynamics_csv(history: &TrainHistory) -> Result<Vec<DynamicsRow>> {
    let first = history
        .snapshots
        .first()
        .ok_or_else(|| Error::InvalidArgument("no parameter snapshots recorded".into()))?;
    if first.params.len() != 2 || first.params[1].weight.cols() != 1 {
        return Err(Error::InvalidArgument(
            "neuron dynamics need a two-layer network with scalar output".into(),
        ));
    }
    let w0 = &first.params[0].weight;
    let hidden = w0.cols();
    if first.params[1].weight.rows() != hidden {
        return Err(Error::InvalidArgument(
            "second layer must read the hidden units directly (dense or GCN filter)".into(),
        ));
    }
    let init: Vec<Vec<f64>> = (0..hidden).map(|j| w0.col_values(j)).collect();
    let mut rows = Vec::with_capacity(history.snapshots.len() * hidden);
    for (s, snap) in history.snapshots.iter().enumerate() {
        let w = &snap.params[0].weight;
        for (j, w0j) in init.iter().enumerate() {
            let wj = w.col_values(j);
            let norm0 = w0j.iter().map(|v| v * v).sum::<f64>().sqrt();
            let inner: f64 = wj.iter().zip(w0j).map(|(a, b)| a * b).sum();
            rows.push(DynamicsRow {
                snapshot: s,
                neuron: j,
                signed_norm: if norm0 == 0.0 { 0.0 } else { inner / norm0 },
                out_weight: snap.params[1].weight[(j, 0)],
            });
        }
    }
    Ok(rows)
}

pub fn format_dynamics(rows: &[DynamicsRow]) -> String {
    let mut out = String::from("snapshot,neuron,signed_norm,out_weight\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.snapshot, r.neuron, r.signed_norm, r.out_weight);
    }
    out
}

/// Sum over neurons of the planar distance between the first and last
/// snapshot points.
pub fn total_displacement(rows: &[DynamicsRow]) -> f64 {
    let Some(last) = rows.iter().map(|r| r.snapshot).max() else {
        return 0.0;
    };
    let start: Vec<_> = rows.iter().filter(|r| r.snapshot == 0).collect();
    rows.iter()
        .filter(|r| r.snapshot == last)
        .map(|r| {
            let s = start.iter().find(|s| s.neuron == r.neuron).expect("neuron present at snapshot 0");
            (r.signed_norm - s.signed_norm).hypot(r.out_weight - s.out_weight)
        })
        .sum()
}
