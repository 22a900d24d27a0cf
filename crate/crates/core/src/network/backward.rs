use super::forward::{BnTrace, ForwardTrace};
use super::{LayerParams, LossKind, Network};
use crate::error::{Error, Result};
use crate::numerics::{activation_vjp, Matrix};

/// Results of one reverse sweep.
#[derive(Clone, Debug)]
pub struct Backward {
    /// Loss summed over the batch.
    pub loss: f64,
    /// Gradients of the batch-mean loss with respect to each layer's raw
    /// weight and bias.
    pub param_grads: Vec<LayerParams>,
    /// `hidden[l]` is the gradient of the summed loss with respect to the
    /// output of layer `l`, for every layer but the last.
    pub hidden: Vec<Matrix>,
}

/// `(ηᵀG / B, 1ᵀG / B)`: the shape shared by parameter gradients and
/// per-layer operators.
pub(crate) fn layer_grad(eta: &Matrix, g: &Matrix, batch: usize, bias: bool) -> Result<LayerParams> {
    let inv = 1.0 / batch as f64;
    let weight = eta.t_matmul(g)?.scale(inv);
    let bias = bias.then(|| g.column_sums().scale(inv));
    LayerParams::new(weight, bias)
}

/// Gradient through `(z − μ)/σ`. With batch statistics both `μ` and `σ`
/// depend on every row; a floored `σ` is constant.
fn bn_backward(du: &Matrix, xhat: &Matrix, stats: &BnTrace) -> Matrix {
    let mut dz = du.clone();
    if !stats.from_batch {
        for i in 0..dz.rows() {
            for (v, sd) in dz.row_mut(i).iter_mut().zip(&stats.sd) {
                *v /= sd;
            }
        }
        return dz;
    }
    let m = du.rows() as f64;
    let cols = du.cols();
    let mut mean_g = vec![0.0; cols];
    let mut mean_gx = vec![0.0; cols];
    for i in 0..du.rows() {
        for j in 0..cols {
            mean_g[j] += du[(i, j)];
            mean_gx[j] += du[(i, j)] * xhat[(i, j)];
        }
    }
    for j in 0..cols {
        mean_g[j] /= m;
        mean_gx[j] /= m;
    }
    for i in 0..dz.rows() {
        for j in 0..cols {
            let slope = if stats.floored[j] { 0.0 } else { xhat[(i, j)] * mean_gx[j] };
            dz[(i, j)] = (du[(i, j)] - mean_g[j] - slope) / stats.sd[j];
        }
    }
    dz
}

impl Network {
    /// Reverse-mode sweep for a Train- or Eval-mode trace.
    pub fn backward(&self, trace: &ForwardTrace, loss: LossKind, y: &Matrix) -> Result<Backward> {
        let depth = self.depth();
        if trace.layers.len() != depth {
            return Err(Error::shape("backward", "trace does not match network"));
        }
        let pred = trace.prediction();
        if pred.shape() != y.shape() {
            return Err(Error::shape("backward", format!("labels {:?} vs prediction {:?}", y.shape(), pred.shape())));
        }
        let last = &trace.layers[depth - 1];
        let mut du = loss.preact_grad(self.last_activation(), &last.preact, pred, y)?;
        let mut param_grads = Vec::with_capacity(depth);
        let mut hidden = vec![Matrix::zeros(0, 0); depth - 1];
        for l in (0..depth).rev() {
            let lt = &trace.layers[l];
            let spec = &self.layers()[l];
            if l + 1 < depth {
                du = activation_vjp(spec.activation, &lt.preact, &hidden[l])?;
            }
            let dz = match &lt.bn {
                Some(stats) => bn_backward(&du, &lt.preact, stats),
                None => du.clone(),
            };
            param_grads.push(layer_grad(&lt.eta, &dz, trace.batch_size, spec.bias)?);
            if l > 0 {
                let deta = dz.matmul_t(&self.params()[l].weight)?;
                hidden[l - 1] = self.bank(l).adjoint(&deta, self.nodes());
            }
        }
        param_grads.reverse();
        Ok(Backward {
            loss: loss.value(pred, y)?,
            param_grads,
            hidden,
        })
    }

    /// Gradient of the summed loss with respect to the output of layer `l`
    /// (0-based), back-propagated through layers `l+1 ..`.
    pub fn grad_wrt_hidden(&self, trace: &ForwardTrace, loss: LossKind, y: &Matrix, l: usize) -> Result<Matrix> {
        if l + 1 >= self.depth() {
            return Err(Error::InvalidArgument(format!(
                "layer {l} is the last layer; its update uses the output residual"
            )));
        }
        Ok(self.backward(trace, loss, y)?.hidden.swap_remove(l))
    }

    /// Ordinary back-propagation gradients of the batch-mean loss.
    pub fn param_gradient_sgd(&self, trace: &ForwardTrace, loss: LossKind, y: &Matrix) -> Result<Vec<LayerParams>> {
        Ok(self.backward(trace, loss, y)?.param_grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::erdos_renyi;
    use crate::network::{init_params, BnMode, FilterKind, InitScheme, LayerSpec, Mode};
    use crate::numerics::{gaussian, ActivationKind, RngStream};

    fn loss_at(net: &Network, x: &Matrix, y: &Matrix, loss: LossKind) -> f64 {
        let (pred, _) = net.forward(x, Mode::Train).unwrap();
        loss.value(&pred, y).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
    }

    fn random_net(seed: u64, depth: usize, bn: bool) -> (Network, Matrix, Matrix, LossKind) {
        let g = erdos_renyi(5, 0.5, RngStream::new(seed, 0)).unwrap();
        let filters = [FilterKind::Gcn, FilterKind::Sage, FilterKind::Chebyshev { k: 2 }, FilterKind::Dense];
        let acts = [ActivationKind::Softplus { beta: 2.0 }, ActivationKind::Sigmoid, ActivationKind::NormalCdf];
        let mut specs = Vec::new();
        let mut width = 2;
        for l in 0..depth {
            let out = if l + 1 == depth { 2 } else { 3 };
            let act = if l + 1 == depth && seed.is_multiple_of(2) {
                ActivationKind::Softmax
            } else {
                acts[(seed as usize + l) % acts.len()]
            };
            let mut s = LayerSpec::new(filters[(seed as usize + l) % filters.len()], act, width, out);
            if bn && l == 0 {
                s = s.with_bn(BnMode::On);
            }
            specs.push(s);
            width = out;
        }
        let net = init_params(specs, Some(g), 5, InitScheme::Glorot, RngStream::new(seed, 2)).unwrap();
        let x = gaussian(RngStream::new(seed, 1), 0.0, 1.0, 15, 2);
        let y = gaussian(RngStream::new(seed, 3), 0.5, 0.3, 15, 2);
        let bounded = matches!(net.last_activation(), ActivationKind::Sigmoid | ActivationKind::Softmax);
        let loss = if seed.is_multiple_of(3) || !bounded { LossKind::Mse } else { LossKind::BinaryCe };
        let y = if loss == LossKind::BinaryCe { y.map(|v| (v > 0.5) as u8 as f64) } else { y };
        (net, x, y, loss)
    }

    #[test]
    fn param_grads_match_finite_differences() {
        let h = 1e-5;
        for seed in 0..20u64 {
            let depth = 1 + (seed as usize % 3);
            let (net, x, y, loss) = random_net(seed, depth, seed % 4 == 1);
            let (_, trace) = net.forward(&x, Mode::Train).unwrap();
            let grads = net.param_gradient_sgd(&trace, loss, &y).unwrap();
            for l in 0..depth {
                let w = &net.params()[l].weight;
                for idx in 0..w.len() {
                    let mut plus = net.clone();
                    plus.params_mut()[l].weight.as_mut_slice()[idx] += h;
                    let mut minus = net.clone();
                    minus.params_mut()[l].weight.as_mut_slice()[idx] -= h;
                    let fd = (loss_at(&plus, &x, &y, loss) - loss_at(&minus, &x, &y, loss)) / (2.0 * h) / 3.0;
                    let an = grads[l].weight.as_slice()[idx];
                    assert!(rel_close(fd, an, 1e-5), "seed {seed} layer {l} idx {idx}: fd {fd} an {an}");
                }
                let b = net.params()[l].bias.as_ref().unwrap();
                for idx in 0..b.len() {
                    let mut plus = net.clone();
                    plus.params_mut()[l].bias.as_mut().unwrap().as_mut_slice()[idx] += h;
                    let mut minus = net.clone();
                    minus.params_mut()[l].bias.as_mut().unwrap().as_mut_slice()[idx] -= h;
                    let fd = (loss_at(&plus, &x, &y, loss) - loss_at(&minus, &x, &y, loss)) / (2.0 * h) / 3.0;
                    let an = grads[l].bias.as_ref().unwrap().as_slice()[idx];
                    assert!(rel_close(fd, an, 1e-5), "seed {seed} bias {l}: fd {fd} an {an}");
                }
            }
        }
    }

    /// Runs layers `l+1..` on a replacement hidden representation.
    fn loss_from_hidden(net: &Network, l: usize, hidden: &Matrix, y: &Matrix, loss: LossKind) -> f64 {
        let tail_specs = net.layers()[l + 1..].to_vec();
        let tail = Network::new(tail_specs, net.graph().cloned(), net.nodes(), net.params()[l + 1..].to_vec()).unwrap();
        loss_at(&tail, hidden, y, loss)
    }

    #[test]
    fn hidden_grads_match_finite_differences() {
        let h = 1e-5;
        for seed in 0..20u64 {
            let depth = 2 + (seed as usize % 2);
            let (net, x, y, loss) = random_net(seed, depth, false);
            let (_, trace) = net.forward(&x, Mode::Train).unwrap();
            for l in 0..depth - 1 {
                let g = net.grad_wrt_hidden(&trace, loss, &y, l).unwrap();
                let hid = &trace.layers[l].output;
                for idx in 0..hid.len() {
                    let mut p = hid.clone();
                    p.as_mut_slice()[idx] += h;
                    let mut m = hid.clone();
                    m.as_mut_slice()[idx] -= h;
                    let fd = (loss_from_hidden(&net, l, &p, &y, loss) - loss_from_hidden(&net, l, &m, &y, loss)) / (2.0 * h);
                    assert!(rel_close(fd, g.as_slice()[idx], 1e-5), "seed {seed} l {l}");
                }
            }
            assert!(net.grad_wrt_hidden(&trace, loss, &y, depth - 1).is_err());
        }
    }

    #[test]
    fn linear_tail_passes_residual_through() {
        let specs = vec![
            LayerSpec::new(FilterKind::Dense, ActivationKind::Sigmoid, 2, 2),
            LayerSpec::new(FilterKind::Dense, ActivationKind::Identity, 2, 2).without_bias(),
        ];
        let mut net = init_params(specs, None, 1, InitScheme::Glorot, RngStream::new(0, 2)).unwrap();
        net.params_mut()[1].weight = Matrix::identity(2);
        let x = gaussian(RngStream::new(0, 1), 0.0, 1.0, 3, 2);
        let y = gaussian(RngStream::new(0, 3), 0.0, 1.0, 3, 2);
        let (pred, trace) = net.forward(&x, Mode::Train).unwrap();
        let g = net.grad_wrt_hidden(&trace, LossKind::Mse, &y, 0).unwrap();
        assert!(g.max_abs_diff(&pred.sub(&y).unwrap()).unwrap() < 1e-15);
        let g0 = net.grad_wrt_hidden(&trace, LossKind::Mse, &pred, 0).unwrap();
        assert_eq!(g0.max_abs(), 0.0);
    }

    #[test]
    fn inactive_relu_units_get_zero_gradient() {
        let specs = vec![
            LayerSpec::new(FilterKind::Dense, ActivationKind::Relu, 2, 3),
            LayerSpec::new(FilterKind::Dense, ActivationKind::Sigmoid, 3, 1),
        ];
        let mut net = init_params(specs, None, 1, InitScheme::Glorot, RngStream::new(1, 2)).unwrap();
        // positive inputs with a negative weight column and bias switch unit 1 off
        net.params_mut()[0].weight[(0, 1)] = -1.0;
        net.params_mut()[0].weight[(1, 1)] = -1.0;
        net.params_mut()[0].bias.as_mut().unwrap()[(0, 1)] = -0.1;
        let x = gaussian(RngStream::new(1, 1), 0.0, 1.0, 6, 2).map(f64::abs);
        let y = Matrix::column(&[1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let (_, trace) = net.forward(&x, Mode::Train).unwrap();
        let grads = net.param_gradient_sgd(&trace, LossKind::Mse, &y).unwrap();
        assert_eq!(grads[0].weight.col_values(1), vec![0.0, 0.0]);
        assert_eq!(grads[0].bias.as_ref().unwrap()[(0, 1)], 0.0);
    }

    #[test]
    fn bn_floor_gradient_is_finite() {
        let specs = vec![LayerSpec::new(FilterKind::Dense, ActivationKind::Sigmoid, 2, 1).with_bn(BnMode::On)];
        let net = init_params(specs, None, 1, InitScheme::Glorot, RngStream::new(2, 2)).unwrap();
        let x = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let (_, trace) = net.forward(&x, Mode::Train).unwrap();
        let g = net.param_gradient_sgd(&trace, LossKind::Mse, &Matrix::column(&[0.0, 1.0])).unwrap();
        assert!(g[0].is_finite());
    }
}
