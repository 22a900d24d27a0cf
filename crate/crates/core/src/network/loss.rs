use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{activation_vjp, softmax_vjp_from_output, ActivationKind, Matrix};

/// Per-sample training loss; batch losses are sums over samples and
/// parameter gradients are divided by the batch size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `½ Σ_nodes ‖f − y‖²`.
    #[default]
    Mse,
    /// Elementwise binary cross-entropy.
    BinaryCe,
    /// Row-wise categorical cross-entropy.
    CategoricalCe,
}

const CLAMP: f64 = 1e-12;

fn clamp01(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

impl LossKind {
    /// Sum of the loss over every row of the stacked batch.
    pub fn value(self, pred: &Matrix, y: &Matrix) -> Result<f64> {
        if pred.shape() != y.shape() {
            return Err(Error::shape("loss", format!("{:?} vs {:?}", pred.shape(), y.shape())));
        }
        let pairs = pred.as_slice().iter().zip(y.as_slice());
        Ok(match self {
            LossKind::Mse => 0.5 * pairs.map(|(p, t)| (p - t) * (p - t)).sum::<f64>(),
            LossKind::BinaryCe => -pairs
                .map(|(&p, &t)| t * clamp01(p).ln() + (1.0 - t) * (1.0 - clamp01(p)).ln())
                .sum::<f64>(),
            LossKind::CategoricalCe => -pairs
                .map(|(&p, &t)| if t == 0.0 { 0.0 } else { t * p.max(CLAMP).ln() })
                .sum::<f64>(),
        })
    }

    /// Gradient of the summed loss with respect to the prediction.
    pub fn output_grad(self, pred: &Matrix, y: &Matrix) -> Result<Matrix> {
        match self {
            LossKind::Mse => pred.sub(y),
            LossKind::BinaryCe => pred.zip_with(y, "loss grad", |p, t| {
                let p = clamp01(p);
                (p - t) / (p * (1.0 - p))
            }),
            LossKind::CategoricalCe => {
                pred.zip_with(y, "loss grad", |p, t| if t == 0.0 { 0.0 } else { -t / p.max(CLAMP) })
            }
        }
    }

    /// Gradient with respect to the last layer's preactivation. Sigmoid with
    /// binary CE and softmax with categorical CE reduce to `f − y` exactly.
    pub fn preact_grad(
        self,
        activation: ActivationKind,
        preact: &Matrix,
        pred: &Matrix,
        y: &Matrix,
    ) -> Result<Matrix> {
        match (self, activation) {
            (LossKind::BinaryCe, ActivationKind::Sigmoid)
            | (LossKind::CategoricalCe, ActivationKind::Softmax) => pred.sub(y),
            (_, ActivationKind::Softmax) => softmax_vjp_from_output(pred, &self.output_grad(pred, y)?),
            _ => activation_vjp(activation, preact, &self.output_grad(pred, y)?),
        }
    }
}
