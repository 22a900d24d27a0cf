use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{layer_grad, ForwardTrace, LayerParams, LossKind, Mode, Network};
use crate::numerics::{min_activation_derivative, sym_eig, Matrix};

/// Value of a layer's monotone operator on a batch, shaped like the layer's
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorEstimate {
    pub layer: usize,
    pub value: LayerParams,
    pub batch_size: usize,
}

fn bn_rescale(value: &mut LayerParams, trace: &ForwardTrace, layer: usize) {
    if let Some(stats) = &trace.layers[layer].bn {
        value.scale_columns(&stats.sd);
    }
}

fn check_batch(trace: &ForwardTrace, y: &Matrix) -> Result<()> {
    if trace.batch_size == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if trace.prediction().shape() != y.shape() {
        return Err(Error::shape(
            "operator",
            format!("labels {:?} vs prediction {:?}", y.shape(), trace.prediction().shape()),
        ));
    }
    Ok(())
}

/// `B⁻¹ Σ_j η(X_{j,L})ᵀ (φ_L(Z_{j,L}) − Y_j)`, with the bias part summing the
/// residual over nodes (the bias is a weight on an all-ones feature).
/// Under batch normalization each output column is multiplied by `σ̂`.
pub fn last_layer_operator(net: &Network, trace: &ForwardTrace, y: &Matrix) -> Result<OperatorEstimate> {
    check_batch(trace, y)?;
    let layer = net.depth() - 1;
    let lt = &trace.layers[layer];
    let residual = lt.output.sub(y)?;
    let mut value = layer_grad(&lt.eta, &residual, trace.batch_size, net.layers()[layer].bias)?;
    bn_rescale(&mut value, trace, layer);
    Ok(OperatorEstimate {
        layer,
        value,
        batch_size: trace.batch_size,
    })
}

fn hidden_from_grad(net: &Network, trace: &ForwardTrace, l: usize, grad: &Matrix) -> Result<OperatorEstimate> {
    let lt = &trace.layers[l];
    let mut value = layer_grad(&lt.eta, grad, trace.batch_size, net.layers()[l].bias)?;
    bn_rescale(&mut value, trace, l);
    Ok(OperatorEstimate {
        layer: l,
        value,
        batch_size: trace.batch_size,
    })
}

/// `B⁻¹ Σ_j η(X_{j,l})ᵀ ∇_{X_{j,l+1}} ℒ` for a hidden layer `l` (0-based):
/// the loss gradient at the layer's output, without the activation's
/// Jacobian.
pub fn hidden_layer_operator(
    net: &Network,
    trace: &ForwardTrace,
    y: &Matrix,
    loss: LossKind,
    l: usize,
) -> Result<OperatorEstimate> {
    check_batch(trace, y)?;
    let grad = net.grad_wrt_hidden(trace, loss, y, l)?;
    hidden_from_grad(net, trace, l, &grad)
}

/// Every layer's operator from a single forward trace and reverse sweep.
pub fn layer_operators(net: &Network, trace: &ForwardTrace, y: &Matrix, loss: LossKind) -> Result<Vec<OperatorEstimate>> {
    check_batch(trace, y)?;
    let depth = net.depth();
    let mut out = Vec::with_capacity(depth);
    if depth > 1 {
        let back = net.backward(trace, loss, y)?;
        for (l, g) in back.hidden.iter().enumerate() {
            out.push(hidden_from_grad(net, trace, l, g)?);
        }
    }
    out.push(last_layer_operator(net, trace, y)?);
    Ok(out)
}

/// Strong-monotonicity modulus and Lipschitz constant of the last-layer
/// operator, estimated on a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub kappa: f64,
    pub lipschitz: f64,
    pub samples: usize,
}

/// Per-sample Gram matrices `η̃ᵀη̃` of the last layer, where `η̃` appends an
/// all-ones column when the layer has a bias.
pub fn last_layer_grams(net: &Network, trace: &ForwardTrace) -> Result<Vec<Matrix>> {
    let layer = net.depth() - 1;
    let eta = &trace.layers[layer].eta;
    let eta = if net.layers()[layer].bias { eta.with_ones_column() } else { eta.clone() };
    let n = net.nodes();
    (0..trace.batch_size)
        .map(|b| {
            let block = eta.row_block(b * n, n);
            block.t_matmul(&block)
        })
        .collect()
}

/// `κ̂ = min φ'(realized preactivations) · mean λ_min(η̃ᵀη̃)` and
/// `K̂₂ = K_φ · mean λ_max(η̃ᵀη̃)` over the samples in `x`.
pub fn estimate_modulus(net: &Network, x: &Matrix, mode: Mode) -> Result<ModulusEstimate> {
    let (_, trace) = net.forward(x, mode)?;
    modulus_from_trace(net, &trace)
}

pub fn modulus_from_trace(net: &Network, trace: &ForwardTrace) -> Result<ModulusEstimate> {
    let layer = net.depth() - 1;
    let act = net.last_activation();
    let grams = last_layer_grams(net, trace)?;
    let mut min_sum = 0.0;
    let mut max_sum = 0.0;
    for g in &grams {
        let eig = sym_eig(g)?;
        min_sum += eig.min().max(0.0);
        max_sum += eig.max();
    }
    let count = grams.len() as f64;
    let slope = min_activation_derivative(act, &trace.layers[layer].preact)?;
    Ok(ModulusEstimate {
        kappa: slope * min_sum / count,
        lipschitz: act.lipschitz() * max_sum / count,
        samples: grams.len(),
    })
}
