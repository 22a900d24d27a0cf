use super::{BnMode, Network, BN_EPSILON, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::numerics::{apply_activation, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Normalization statistics used by one layer in one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BnTrace {
    pub mean: Vec<f64>,
    /// Standard deviation after the `1e-5` floor.
    pub sd: Vec<f64>,
    /// Biased batch variance, kept for the running-stat update.
    pub var: Vec<f64>,
    /// True when the statistics came from the batch (and so depend on it).
    pub from_batch: bool,
    /// Columns whose standard deviation hit the floor.
    pub floored: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct LayerTrace {
    /// `X_l`.
    pub input: Matrix,
    /// `η(X_l)`.
    pub eta: Matrix,
    /// `η(X_l) W + b` before normalization.
    pub raw: Matrix,
    pub bn: Option<BnTrace>,
    /// Argument of the activation.
    pub preact: Matrix,
    /// `X_{l+1}`.
    pub output: Matrix,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub batch_size: usize,
}

impl ForwardTrace {
    pub fn prediction(&self) -> &Matrix {
        &self.layers[self.layers.len() - 1].output
    }
}

fn batch_stats(z: &Matrix) -> BnTrace {
    let m = z.rows() as f64;
    let cols = z.cols();
    let mut mean = vec![0.0; cols];
    for i in 0..z.rows() {
        for (acc, v) in mean.iter_mut().zip(z.row(i)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; cols];
    for i in 0..z.rows() {
        for ((acc, v), mu) in var.iter_mut().zip(z.row(i)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    let raw_sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    BnTrace {
        floored: raw_sd.iter().map(|&s| s < BN_EPSILON).collect(),
        sd: raw_sd.iter().map(|&s| s.max(BN_EPSILON)).collect(),
        mean,
        var,
        from_batch: true,
    }
}

fn normalize(z: &Matrix, stats: &BnTrace) -> Matrix {
    let mut out = z.clone();
    for i in 0..out.rows() {
        for ((v, mu), sd) in out.row_mut(i).iter_mut().zip(&stats.mean).zip(&stats.sd) {
            *v = (*v - mu) / sd;
        }
    }
    out
}

impl Network {
    fn check_input(&self, x: &Matrix) -> Result<usize> {
        if x.cols() != self.input_channels() {
            return Err(Error::shape(
                "forward",
                format!("input has {} channels, network expects {}", x.cols(), self.input_channels()),
            ));
        }
        if x.rows() == 0 || !x.rows().is_multiple_of(self.nodes()) {
            return Err(Error::shape(
                "forward",
                format!("{} rows is not a positive multiple of {} nodes", x.rows(), self.nodes()),
            ));
        }
        Ok(x.rows() / self.nodes())
    }

    fn uses_batch_stats(&self, bn: BnMode, mode: Mode) -> bool {
        match (bn, mode) {
            (BnMode::Off, _) | (_, Mode::Eval) => false,
            (BnMode::On, Mode::Train) => true,
            (BnMode::HalfFrozen { .. }, Mode::Train) => !self.bn_frozen(),
        }
    }

    fn run(&self, x: &Matrix, mode: Mode, keep: bool) -> Result<(Matrix, Vec<LayerTrace>)> {
        self.check_input(x)?;
        let mut traces = Vec::with_capacity(if keep { self.depth() } else { 0 });
        let mut cur = x.clone();
        for (l, spec) in self.layers().iter().enumerate() {
            let p = &self.params()[l];
            let eta = self.bank(l).apply(&cur, self.nodes());
            let mut raw = eta.matmul(&p.weight)?;
            if let Some(b) = &p.bias {
                for i in 0..raw.rows() {
                    for (v, bj) in raw.row_mut(i).iter_mut().zip(b.row(0)) {
                        *v += bj;
                    }
                }
            }
            let bn = if spec.bn == BnMode::Off {
                None
            } else if self.uses_batch_stats(spec.bn, mode) {
                Some(batch_stats(&raw))
            } else {
                let run = self.running_stats()[l].as_ref().expect("bn layer has running stats");
                let raw_sd: Vec<f64> = run.var.iter().map(|v| v.sqrt()).collect();
                Some(BnTrace {
                    mean: run.mean.clone(),
                    floored: raw_sd.iter().map(|&s| s < BN_EPSILON).collect(),
                    sd: raw_sd.iter().map(|&s| s.max(BN_EPSILON)).collect(),
                    var: run.var.clone(),
                    from_batch: false,
                })
            };
            let preact = match &bn {
                Some(stats) => normalize(&raw, stats),
                None => raw.clone(),
            };
            let output = apply_activation(spec.activation, &preact)?;
            output.ensure_finite("forward")?;
            if keep {
                traces.push(LayerTrace {
                    input: std::mem::replace(&mut cur, output.clone()),
                    eta,
                    raw,
                    bn,
                    preact,
                    output,
                });
            } else {
                cur = output;
            }
        }
        Ok((cur, traces))
    }

    /// Forward pass with everything the backward pass and the operators need.
    /// Running statistics are not touched; see [`Network::update_running_stats`].
    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, ForwardTrace)> {
        let batch_size = self.check_input(x)?;
        let (pred, layers) = self.run(x, mode, true)?;
        Ok((pred, ForwardTrace { layers, batch_size }))
    }

    /// Prediction only.
    pub fn predict(&self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        Ok(self.run(x, mode, false)?.0)
    }

    /// Folds the batch statistics of a Train-mode trace into the running
    /// statistics with momentum 0.1.
    pub fn update_running_stats(&mut self, trace: &ForwardTrace) {
        for (l, lt) in trace.layers.iter().enumerate() {
            if let (Some(stats), Some(run)) = (&lt.bn, self.running[l].as_mut()) {
                if !stats.from_batch {
                    continue;
                }
                for (r, m) in run.mean.iter_mut().zip(&stats.mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                }
                for (r, v) in run.var.iter_mut().zip(&stats.var) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
                }
            }
        }
    }

    /// Train-mode forward that also updates running statistics.
    pub fn forward_train(&mut self, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        let (pred, trace) = self.forward(x, Mode::Train)?;
        self.update_running_stats(&trace);
        Ok((pred, trace))
    }
}
