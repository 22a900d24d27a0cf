use crate::data::{gen_gcn_teacher, teacher_dataset, Dataset};
use crate::error::{Error, Result};
use crate::graph::{
    erdos_renyi, low_energy_perturbation, mean_low_energy_norm, mismatch_bound, normalized_laplacian, spectral_split,
};
use crate::metrics::{ce_loss_gap_bound, mse_loss};
use crate::network::{init_params, layer_grad, BnMode, FilterKind, InitScheme, LayerParams, LayerSpec, LossKind, Mode, Network};
use crate::numerics::rng::streams;
use crate::numerics::{gaussian, min_activation_derivative, sigmoid, sym_eig_min, ActivationKind, Matrix, RngStream};
use crate::trainer::{train, Method, StepRule, TrainConfig};
use crate::vi::{estimate_modulus, last_layer_grams, last_layer_operator, layer_operators, modulus_from_trace};

use super::{CheckResult, Tolerance};

const FD_STEP: f64 = 1e-5;

fn stream(check: u64, i: u64) -> RngStream {
    RngStream::new(check, streams::CHECKS).split(i)
}

/// Replaces every parameter with an `N(0, sd²)` draw.
fn randomize(net: &mut Network, s: RngStream, sd: f64) {
    for (l, p) in net.params_mut().iter_mut().enumerate() {
        let s = s.split(l as u64);
        p.weight = gaussian(s.split(0), 0.0, sd, p.weight.rows(), p.weight.cols());
        if let Some(b) = p.bias.as_mut() {
            *b = gaussian(s.split(1), 0.0, sd, b.rows(), b.cols());
        }
    }
}

fn one_hot(rows: usize, classes: usize, s: RngStream) -> Matrix {
    let u = gaussian(s, 0.0, 1.0, rows, 1);
    let mut y = Matrix::zeros(rows, classes);
    for i in 0..rows {
        // the sign and magnitude of a normal draw pick a class
        let c = ((u[(i, 0)].abs() * 1000.0) as usize) % classes;
        y[(i, c)] = 1.0;
    }
    y
}

fn coin_flips(rows: usize, cols: usize, s: RngStream) -> Matrix {
    gaussian(s, 0.0, 1.0, rows, cols).map(|v| (v > 0.0) as u8 as f64)
}

/// A one-layer GCN with a canonical-link output, random parameters, a batch
/// and matching labels.
struct LinkInstance {
    net: Network,
    x: Matrix,
    y: Matrix,
    loss: LossKind,
}

fn link_instance(i: u64) -> Result<LinkInstance> {
    let s = stream(1, i);
    let g = erdos_renyi(6, 0.5, s.split(0))?;
    let (act, out, loss) = if i.is_multiple_of(2) {
        (ActivationKind::Sigmoid, 2, LossKind::BinaryCe)
    } else {
        (ActivationKind::Softmax, 3, LossKind::CategoricalCe)
    };
    let spec = vec![LayerSpec::new(FilterKind::Gcn, act, 3, out)];
    let mut net = init_params(spec, Some(g), 6, InitScheme::Glorot, s.split(1))?;
    randomize(&mut net, s.split(2), 1.0);
    let batch = 8;
    let x = gaussian(s.split(3), 0.0, 1.0, batch * 6, 3);
    let y = if loss == LossKind::BinaryCe {
        coin_flips(batch * 6, out, s.split(4))
    } else {
        one_hot(batch * 6, out, s.split(4))
    };
    Ok(LinkInstance { net, x, y, loss })
}

const LINK_INSTANCES: u64 = 100;

pub fn operator_gradient_equivalence() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for i in 0..LINK_INSTANCES {
        let inst = link_instance(i)?;
        let (_, trace) = inst.net.forward(&inst.x, Mode::Train)?;
        let op = last_layer_operator(&inst.net, &trace, &inst.y)?.value;
        let grad = &inst.net.param_gradient_sgd(&trace, inst.loss, &inst.y)?[0];
        worst = worst.max(max_abs_diff(&op, grad)?);
    }
    Ok(CheckResult::new(
        "operator_gradient_equivalence",
        "last-layer operator vs back-propagated gradient, sigmoid+BCE and softmax+CE",
        Tolerance::AtMost { limit: 1e-12 },
        worst,
        LINK_INSTANCES as usize,
    ))
}

fn max_abs_diff(a: &LayerParams, b: &LayerParams) -> Result<f64> {
    let mut m = a.weight.max_abs_diff(&b.weight)?;
    if let (Some(x), Some(y)) = (&a.bias, &b.bias) {
        m = m.max(x.max_abs_diff(y)?);
    }
    Ok(m)
}

fn max_abs(p: &LayerParams) -> f64 {
    p.bias.as_ref().map_or(0.0, |b| b.max_abs()).max(p.weight.max_abs())
}

fn mean_loss(net: &Network, x: &Matrix, y: &Matrix, loss: LossKind) -> Result<f64> {
    let (pred, trace) = net.forward(x, Mode::Train)?;
    Ok(loss.value(&pred, y)? / trace.batch_size as f64)
}

/// Central differences of the batch-mean loss in every parameter of every layer.
fn fd_gradient(net: &Network, x: &Matrix, y: &Matrix, loss: LossKind) -> Result<Vec<LayerParams>> {
    let mut out = Vec::with_capacity(net.depth());
    for l in 0..net.depth() {
        let mut g = net.params()[l].zeros_like();
        let nw = g.weight.len();
        let nb = g.bias.as_ref().map_or(0, |b| b.len());
        for idx in 0..nw + nb {
            let bump = |delta: f64| -> Result<f64> {
                let mut n = net.clone();
                let p = &mut n.params_mut()[l];
                if idx < nw {
                    p.weight.as_mut_slice()[idx] += delta;
                } else {
                    p.bias.as_mut().expect("bias").as_mut_slice()[idx - nw] += delta;
                }
                mean_loss(&n, x, y, loss)
            };
            let d = (bump(FD_STEP)? - bump(-FD_STEP)?) / (2.0 * FD_STEP);
            if idx < nw {
                g.weight.as_mut_slice()[idx] = d;
            } else {
                g.bias.as_mut().expect("bias").as_mut_slice()[idx - nw] = d;
            }
        }
        out.push(g);
    }
    Ok(out)
}

fn relative(fd: &LayerParams, an: &LayerParams) -> Result<f64> {
    Ok(max_abs_diff(fd, an)? / max_abs(an).max(1e-3))
}

pub fn operator_finite_difference() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for i in 0..LINK_INSTANCES {
        let inst = link_instance(i)?;
        let (_, trace) = inst.net.forward(&inst.x, Mode::Train)?;
        let op = last_layer_operator(&inst.net, &trace, &inst.y)?.value;
        let fd = fd_gradient(&inst.net, &inst.x, &inst.y, inst.loss)?;
        worst = worst.max(relative(&fd[0], &op)?);
    }
    Ok(CheckResult::new(
        "operator_finite_difference",
        "last-layer operator vs central differences of the loss (h = 1e-5), relative",
        Tolerance::AtMost { limit: 1e-5 },
        worst,
        LINK_INSTANCES as usize,
    ))
}

/// The two single-layer teachers used by the zero-at-teacher checks.
fn teachers() -> Result<Vec<Network>> {
    let g = erdos_renyi(15, 0.15, RngStream::new(0, streams::GRAPH))?;
    let gcn = vec![LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 2, 1)];
    let (_, a) = gen_gcn_teacher(&g, 1, gcn, 0, 0)?;
    let dense = vec![LayerSpec::new(FilterKind::Dense, ActivationKind::Softmax, 2, 3)];
    let b = init_params(dense, None, 1, InitScheme::Teacher, RngStream::new(0, streams::TEACHER))?;
    Ok(vec![a, b])
}

pub fn zero_at_teacher_expectations() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let ts = teachers()?;
    for (i, t) in ts.iter().enumerate() {
        let d = teacher_dataset(t, 2000, 500 + i as u64)?;
        let (_, trace) = t.forward(&d.features, Mode::Eval)?;
        let op = last_layer_operator(t, &trace, d.expectations.as_ref().expect("teacher data"))?.value;
        worst = worst.max(max_abs(&op));
    }
    Ok(CheckResult::new(
        "zero_at_teacher_expectations",
        "max |F(teacher)| against stored conditional expectations",
        Tolerance::AtMost { limit: 1e-10 },
        worst,
        ts.len(),
    ))
}

/// Per-sample operators from a full-batch trace, flattened.
fn per_sample_operators(net: &Network, d: &Dataset, labels: &Matrix) -> Result<Vec<Vec<f64>>> {
    let (_, trace) = net.forward(&d.features, Mode::Eval)?;
    let lt = trace.layers.last().expect("layer");
    let residual = lt.output.sub(labels)?;
    let n = net.nodes();
    let bias = net.layers()[net.depth() - 1].bias;
    (0..d.len())
        .map(|b| {
            let p = layer_grad(&lt.eta.row_block(b * n, n), &residual.row_block(b * n, n), 1, bias)?;
            let mut v = p.weight.into_vec();
            if let Some(bb) = p.bias {
                v.extend(bb.into_vec());
            }
            Ok(v)
        })
        .collect()
}

/// `‖F̂(teacher)‖ / (5σ̂/√N)` with sampled labels; at most 1 is a pass.
pub fn zero_at_teacher_sampled() -> Result<CheckResult> {
    const N: usize = 50_000;
    let mut worst: f64 = 0.0;
    let ts = teachers()?;
    for (i, t) in ts.iter().enumerate() {
        let d = teacher_dataset(t, N, 700 + i as u64)?;
        let ops = per_sample_operators(t, &d, &d.labels)?;
        let dim = ops[0].len();
        let mut mean = vec![0.0; dim];
        for o in &ops {
            for (m, v) in mean.iter_mut().zip(o) {
                *m += v / N as f64;
            }
        }
        let var = ops
            .iter()
            .map(|o| o.iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / N as f64;
        let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
        worst = worst.max(norm / (5.0 * var.sqrt() / (N as f64).sqrt()));
    }
    Ok(CheckResult::new(
        "zero_at_teacher_sampled",
        "‖F̂(teacher)‖ over 5σ̂/√N with 50000 sampled labels",
        Tolerance::AtMost { limit: 1.0 },
        worst,
        ts.len(),
    ))
}

/// Operator differences on random parameter pairs of one-layer sigmoid GCNs.
pub struct MonotonePairs {
    /// `⟨ΔF̂, ΔΘ⟩`.
    pub inner: Vec<f64>,
    /// `κ̃‖ΔΘ‖²` with `κ̃` from preactivations at both endpoints.
    pub strong: Vec<f64>,
    pub op_diff: Vec<f64>,
    /// `K̂₂‖ΔΘ‖`.
    pub lipschitz: Vec<f64>,
}

const PAIRS: usize = 200;

fn monotone_pairs() -> Result<MonotonePairs> {
    let mut out = MonotonePairs {
        inner: Vec::new(),
        strong: Vec::new(),
        op_diff: Vec::new(),
        lipschitz: Vec::new(),
    };
    let per_instance = 20;
    for inst in 0..(PAIRS / per_instance) as u64 {
        let s = stream(3, inst);
        let g = erdos_renyi(8, 0.4, s.split(0))?;
        let spec = vec![LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 3, 2)];
        let base = init_params(spec, Some(g), 8, InitScheme::Glorot, s.split(1))?;
        let x = gaussian(s.split(2), 0.0, 1.0, 10 * 8, 3);
        let y = coin_flips(10 * 8, 2, s.split(3));
        // the Gram spectrum depends only on the batch, not on the parameters
        let (_, t0) = base.forward(&x, Mode::Train)?;
        let grams = last_layer_grams(&base, &t0)?;
        let mut mean_lmin = 0.0;
        for g in &grams {
            mean_lmin += sym_eig_min(g)?.max(0.0) / grams.len() as f64;
        }
        for pair in 0..per_instance as u64 {
            let mut a = base.clone();
            let mut b = base.clone();
            let sd = [0.3, 1.0, 3.0][pair as usize % 3];
            randomize(&mut a, s.split(100 + 2 * pair), sd);
            randomize(&mut b, s.split(101 + 2 * pair), sd);
            let (_, ta) = a.forward(&x, Mode::Train)?;
            let (_, tb) = b.forward(&x, Mode::Train)?;
            let fa = last_layer_operator(&a, &ta, &y)?.value;
            let fb = last_layer_operator(&b, &tb, &y)?.value;
            let df = fa.sub(&fb)?;
            let dt = a.params()[0].sub(&b.params()[0])?;
            let act = ActivationKind::Sigmoid;
            let slope = min_activation_derivative(act, &ta.layers[0].preact)?
                .min(min_activation_derivative(act, &tb.layers[0].preact)?);
            let m = modulus_from_trace(&a, &ta)?;
            out.inner.push(df.dot(&dt)?);
            out.strong.push(slope * mean_lmin * dt.norm_sq());
            out.op_diff.push(df.norm());
            out.lipschitz.push(m.lipschitz * dt.norm());
        }
    }
    Ok(out)
}

pub fn monotonicity() -> Result<CheckResult> {
    let p = monotone_pairs()?;
    let min = p.inner.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CheckResult::new(
        "monotonicity",
        "min ⟨ΔF̂, ΔΘ⟩ over random parameter pairs",
        Tolerance::AtLeast { limit: -1e-10 },
        min,
        PAIRS,
    ))
}

pub fn strong_monotonicity() -> Result<CheckResult> {
    let p = monotone_pairs()?;
    let min = p
        .inner
        .iter()
        .zip(&p.strong)
        .map(|(i, s)| i - s)
        .fold(f64::INFINITY, f64::min);
    Ok(CheckResult::new(
        "strong_monotonicity",
        "min ⟨ΔF̂, ΔΘ⟩ − κ̃‖ΔΘ‖² over random parameter pairs",
        Tolerance::AtLeast { limit: -1e-8 },
        min,
        PAIRS,
    ))
}

pub fn lipschitz_bound() -> Result<CheckResult> {
    let p = monotone_pairs()?;
    let max = p
        .op_diff
        .iter()
        .zip(&p.lipschitz)
        .map(|(d, l)| d - l)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckResult::new(
        "lipschitz_bound",
        "max ‖ΔF̂‖ − K̂₂‖ΔΘ‖ over random parameter pairs",
        Tolerance::AtMost { limit: 1e-8 },
        max,
        PAIRS,
    ))
}

/// Mean of single-sample operators (each from its own forward pass) vs the
/// batch operator, every layer of two-layer networks.
pub fn unbiasedness() -> Result<CheckResult> {
    const INSTANCES: u64 = 20;
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let s = stream(4, i);
        let g = erdos_renyi(5, 0.5, s.split(0))?;
        let spec = vec![
            LayerSpec::new(FilterKind::Gcn, ActivationKind::Softplus { beta: 1.0 }, 2, 4),
            LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 4, 1),
        ];
        let mut net = init_params(spec, Some(g), 5, InitScheme::Glorot, s.split(1))?;
        randomize(&mut net, s.split(2), 1.0);
        let batch = 12;
        let x = gaussian(s.split(3), 0.0, 1.0, batch * 5, 2);
        let y = coin_flips(batch * 5, 1, s.split(4));
        let (_, trace) = net.forward(&x, Mode::Train)?;
        let full = layer_operators(&net, &trace, &y, LossKind::Mse)?;
        let mut mean: Vec<LayerParams> = full.iter().map(|o| o.value.zeros_like()).collect();
        for b in 0..batch {
            let xb = x.row_block(b * 5, 5);
            let yb = y.row_block(b * 5, 5);
            let (_, tb) = net.forward(&xb, Mode::Train)?;
            for (m, o) in mean.iter_mut().zip(layer_operators(&net, &tb, &yb, LossKind::Mse)?) {
                m.axpy(1.0 / batch as f64, &o.value)?;
            }
        }
        for (m, f) in mean.iter().zip(&full) {
            worst = worst.max(max_abs_diff(m, &f.value)?);
        }
    }
    Ok(CheckResult::new(
        "unbiasedness",
        "mean of per-sample operators vs the batch operator",
        Tolerance::AtMost { limit: 1e-12 },
        worst,
        INSTANCES as usize,
    ))
}

pub fn softmax_kappa() -> Result<CheckResult> {
    let spec = vec![LayerSpec::new(FilterKind::Dense, ActivationKind::Softmax, 3, 4)];
    let net = init_params(spec, None, 1, InitScheme::Teacher, stream(5, 0))?;
    let x = gaussian(stream(5, 1), 0.0, 1.0, 200, 3);
    let m = estimate_modulus(&net, &x, Mode::Eval)?;
    Ok(CheckResult::new(
        "softmax_kappa",
        "strong-monotonicity modulus estimated for a softmax output",
        Tolerance::AtMost { limit: 0.0 },
        m.kappa,
        1,
    ))
}

/// With batch statistics held fixed, stepping `(W/σ̂, (b−μ̂)/σ̂)` by `g` and
/// mapping back equals stepping `(W, b)` by the σ̂-rescaled operator. Also
/// checks that the reparameterized layer reproduces the normalized
/// preactivation.
pub fn bn_reparameterization() -> Result<CheckResult> {
    const INSTANCES: u64 = 50;
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let s = stream(6, i);
        let g = erdos_renyi(6, 0.5, s.split(0))?;
        let filter = [FilterKind::Gcn, FilterKind::Dense, FilterKind::Sage][i as usize % 3];
        let (graph, nodes) = if filter == FilterKind::Dense { (None, 1) } else { (Some(g), 6) };
        let spec = vec![LayerSpec::new(filter, ActivationKind::Sigmoid, 3, 2).with_bn(BnMode::On)];
        let mut net = init_params(spec, graph, nodes, InitScheme::Glorot, s.split(1))?;
        randomize(&mut net, s.split(2), 1.0);
        let x = gaussian(s.split(3), 0.5, 2.0, 10 * nodes, 3);
        let y = coin_flips(10 * nodes, 2, s.split(4));
        let (_, trace) = net.forward(&x, Mode::Train)?;
        let lt = &trace.layers[0];
        let stats = lt.bn.as_ref().expect("bn layer");
        let p = &net.params()[0];
        let mut w_t = p.weight.clone();
        let mut b_t = p.bias.clone().expect("bias");
        for j in 0..w_t.cols() {
            for r in 0..w_t.rows() {
                w_t[(r, j)] /= stats.sd[j];
            }
            b_t[(0, j)] = (b_t[(0, j)] - stats.mean[j]) / stats.sd[j];
        }
        let mut repro = lt.eta.matmul(&w_t)?;
        for r in 0..repro.rows() {
            for (v, b) in repro.row_mut(r).iter_mut().zip(b_t.row(0)) {
                *v += b;
            }
        }
        worst = worst.max(repro.max_abs_diff(&lt.preact)?);
        // g: the operator with respect to the normalized parameters
        let residual = lt.output.sub(&y)?;
        let step = layer_grad(&lt.eta, &residual, trace.batch_size, true)?;
        let gamma = 0.1;
        let op = last_layer_operator(&net, &trace, &y)?.value;
        let mut direct = p.clone();
        direct.axpy(-gamma, &op)?;
        let mut back = LayerParams::new(w_t, Some(b_t))?;
        back.axpy(-gamma, &step)?;
        let bb = back.bias.as_mut().expect("bias");
        for j in 0..back.weight.cols() {
            for r in 0..back.weight.rows() {
                back.weight[(r, j)] *= stats.sd[j];
            }
            bb[(0, j)] = bb[(0, j)] * stats.sd[j] + stats.mean[j];
        }
        worst = worst.max(max_abs_diff(&back, &direct)?);
    }
    Ok(CheckResult::new(
        "bn_reparameterization",
        "normalized-parameter step mapped back vs σ̂-rescaled raw step",
        Tolerance::AtMost { limit: 1e-12 },
        worst,
        INSTANCES as usize,
    ))
}

fn random_network(i: u64) -> Result<(Network, Matrix, Matrix, LossKind)> {
    let s = stream(7, i);
    let g = erdos_renyi(5, 0.5, s.split(0))?;
    let depth = 1 + (i as usize % 3);
    let filters = [FilterKind::Gcn, FilterKind::Sage, FilterKind::Chebyshev { k: 2 }, FilterKind::Dense];
    let acts = [ActivationKind::Softplus { beta: 2.0 }, ActivationKind::Sigmoid, ActivationKind::NormalCdf];
    let mut specs = Vec::new();
    let mut width = 2;
    for l in 0..depth {
        let out = if l + 1 == depth { 2 } else { 3 };
        let act = if l + 1 == depth && i.is_multiple_of(2) {
            ActivationKind::Softmax
        } else {
            acts[(i as usize + l) % acts.len()]
        };
        let mut spec = LayerSpec::new(filters[(i as usize + l) % filters.len()], act, width, out);
        if i % 3 == 1 && l == 0 {
            spec = spec.with_bn(BnMode::On);
        }
        specs.push(spec);
        width = out;
    }
    let net = init_params(specs, Some(g), 5, InitScheme::Glorot, s.split(1))?;
    let x = gaussian(s.split(2), 0.0, 1.0, 4 * 5, 2);
    let loss = if i.is_multiple_of(2) { LossKind::CategoricalCe } else { LossKind::Mse };
    let y = if loss == LossKind::CategoricalCe {
        one_hot(4 * 5, 2, s.split(3))
    } else {
        gaussian(s.split(3), 0.5, 0.3, 4 * 5, 2)
    };
    Ok((net, x, y, loss))
}

/// Relative error of back-propagated parameter and hidden-output gradients
/// against central differences.
pub fn gradient_oracles() -> Result<CheckResult> {
    const INSTANCES: u64 = 20;
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let (net, x, y, loss) = random_network(i)?;
        let (_, trace) = net.forward(&x, Mode::Train)?;
        let grads = net.param_gradient_sgd(&trace, loss, &y)?;
        for (fd, an) in fd_gradient(&net, &x, &y, loss)?.iter().zip(&grads) {
            worst = worst.max(relative(fd, an)?);
        }
        for l in 0..net.depth() - 1 {
            let an = net.grad_wrt_hidden(&trace, loss, &y, l)?;
            let tail = Network::new(
                net.layers()[l + 1..].to_vec(),
                net.graph().cloned(),
                net.nodes(),
                net.params()[l + 1..].to_vec(),
            )?;
            let hidden = &trace.layers[l].output;
            let mut fd = Matrix::zeros(hidden.rows(), hidden.cols());
            for idx in 0..hidden.len() {
                let at = |delta: f64| -> Result<f64> {
                    let mut h = hidden.clone();
                    h.as_mut_slice()[idx] += delta;
                    let (pred, _) = tail.forward(&h, Mode::Train)?;
                    loss.value(&pred, &y)
                };
                fd.as_mut_slice()[idx] = (at(FD_STEP)? - at(-FD_STEP)?) / (2.0 * FD_STEP);
            }
            worst = worst.max(fd.max_abs_diff(&an)? / an.max_abs().max(1e-3));
        }
    }
    Ok(CheckResult::new(
        "gradient_oracles",
        "parameter and hidden-output gradients vs central differences, relative, BN included",
        Tolerance::AtMost { limit: 1e-5 },
        worst,
        INSTANCES as usize,
    ))
}

/// Mean node-ℓ₂ distance between `φ(A_s θ)` and fixed targets.
fn mean_gap(inputs: &[Matrix], targets: &[Vec<f64>], theta: [f64; 2]) -> f64 {
    let mut total = 0.0;
    for (a, t) in inputs.iter().zip(targets) {
        let mut sq = 0.0;
        for (r, tv) in t.iter().enumerate() {
            let row = a.row(r);
            let d = sigmoid(row[0] * theta[0] + row[1] * theta[1]) - tv;
            sq += d * d;
        }
        total += sq.sqrt();
    }
    total / inputs.len() as f64
}

/// Minimizes `mean_gap` over a uniform grid, then over a finer grid around
/// the coarse optimum.
fn grid_minimum(inputs: &[Matrix], targets: &[Vec<f64>], radius: f64) -> [f64; 2] {
    let search = |center: [f64; 2], half: f64, step: f64| -> [f64; 2] {
        let count = (2.0 * half / step).round() as i64;
        let mut best = (f64::INFINITY, center);
        for i in 0..=count {
            for j in 0..=count {
                let th = [center[0] - half + i as f64 * step, center[1] - half + j as f64 * step];
                let v = mean_gap(inputs, targets, th);
                if v < best.0 {
                    best = (v, th);
                }
            }
        }
        best.1
    };
    let coarse = search([0.0, 0.0], radius, 0.05);
    search(coarse, 0.05, 0.001)
}

/// Largest ratio of the grid-optimal prediction gap to the mismatch bound
/// under a low-energy Laplacian perturbation.
pub fn mismatch_gap() -> Result<CheckResult> {
    const INSTANCES: u64 = 20;
    const SAMPLES: usize = 100;
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let s = stream(8, i);
        let n = 10;
        let k = n / 2;
        let delta = if i % 2 == 0 { 0.01 } else { 0.05 };
        let g = erdos_renyi(n, 0.4, s.split(0))?;
        let lap = normalized_laplacian(&g)?;
        let perturbed = low_energy_perturbation(&g, k, delta, s.split(1))?;
        let theta = gaussian(s.split(2), 1.0, 1.0, 2, 1);
        let xs: Vec<Matrix> = (0..SAMPLES as u64).map(|j| gaussian(s.split(10 + j), 0.0, 1.0, n, 2)).collect();
        let targets = xs
            .iter()
            .map(|x| Ok(lap.matmul(x)?.matmul(&theta)?.as_slice().iter().map(|&z| sigmoid(z)).collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let inputs = xs.iter().map(|x| perturbed.matmul(x)).collect::<Result<Vec<_>>>()?;
        let radius = (theta.max_abs() + 1.0).max(4.0);
        let best = grid_minimum(&inputs, &targets, radius);
        let gap = mean_gap(&inputs, &targets, best);
        let split = spectral_split(&g, k)?;
        let bound = mismatch_bound(
            delta,
            ActivationKind::Sigmoid.lipschitz(),
            mean_low_energy_norm(&split, &xs)?,
            theta.frobenius_norm(),
        )?;
        worst = worst.max(gap / bound);
    }
    Ok(CheckResult::new(
        "mismatch_bound",
        "grid-optimal prediction gap under a low-energy Laplacian perturbation over the bound",
        Tolerance::AtMost { limit: 1.0 },
        worst,
        INSTANCES as usize,
    ))
}

/// One-layer GCN-sigmoid teacher and data used by the trained-instance checks.
fn sigmoid_gcn_task(n_train: usize, n_test: usize) -> Result<(Network, Dataset, Dataset)> {
    let g = erdos_renyi(15, 0.15, RngStream::new(0, streams::GRAPH))?;
    let spec = vec![LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 2, 1)];
    let (train_data, teacher) = gen_gcn_teacher(&g, n_train, spec.clone(), 0, 11)?;
    let test = teacher_dataset(&teacher, n_test, 12)?;
    let student = init_params(spec, Some(g), 15, InitScheme::Glorot, RngStream::new(0, streams::INIT))?;
    Ok((student, train_data, test))
}

/// Worst excess of the per-sample cross-entropy gap over its bound, on test
/// samples where the trained model's ℓ∞ error `ε` is below every entry's
/// margin `min(E, 1−E)`.
pub fn ce_gap_bound() -> Result<CheckResult> {
    let (student, train_data, test) = sigmoid_gcn_task(2000, 1000)?;
    let cfg = TrainConfig {
        method: Method::Svi,
        epochs: 20,
        batch_size: 10,
        step: StepRule::Constant { lr: 0.05 },
        loss: LossKind::BinaryCe,
        snapshot_every: 0,
        ..TrainConfig::default()
    };
    let (model, _) = train(student, &train_data, None, &cfg)?;
    let truth = test.expectations.as_ref().expect("teacher data");
    let pred = model.predict(&test.features, Mode::Eval)?;
    let eps = pred.max_abs_diff(truth)?;
    let n = test.nodes;
    let mut worst = f64::NEG_INFINITY;
    let mut used = 0;
    for b in 0..test.len() {
        let e = truth.row_block(b * n, n);
        if !e.as_slice().iter().all(|&v| eps < v.min(1.0 - v)) {
            continue;
        }
        let p = pred.row_block(b * n, n);
        let y = test.labels.row_block(b * n, n);
        let gap = (LossKind::BinaryCe.value(&p, &y)? - LossKind::BinaryCe.value(&e, &y)?).abs();
        worst = worst.max(gap - ce_loss_gap_bound(&e, &y, eps)?);
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument(format!("no test sample has margins above eps = {eps}")));
    }
    Ok(CheckResult::new(
        "ce_gap_bound",
        "max per-sample |CE(model) − CE(truth)| minus the bound at the measured ℓ∞ error",
        Tolerance::AtMost { limit: 1e-12 },
        worst,
        used,
    )
    .with_note(format!("eps = {eps:.4e}")))
}

/// Batch sizes of the insensitivity check.
pub const BATCH_SIZES: [usize; 3] = [50, 100, 200];

/// Relative spread `(max − min)/min` of final test MSE across batch sizes.
pub fn batch_size_spread() -> Result<CheckResult> {
    let (student, train_data, test) = sigmoid_gcn_task(2000, 2000)?;
    let mut finals = Vec::new();
    for &b in &BATCH_SIZES {
        let cfg = TrainConfig {
            method: Method::Svi,
            epochs: 100,
            batch_size: b,
            step: StepRule::Constant { lr: 0.05 },
            snapshot_every: 0,
            ..TrainConfig::default()
        };
        let (model, _) = train(student.clone(), &train_data, None, &cfg)?;
        let pred = model.predict(&test.features, Mode::Eval)?;
        finals.push(mse_loss(&pred, &test.labels, test.nodes)?);
    }
    let max = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CheckResult::new(
        "batch_size_insensitivity",
        "relative spread of final test MSE over batch sizes 50, 100, 200",
        Tolerance::AtMost { limit: 0.05 },
        (max - min) / min,
        BATCH_SIZES.len(),
    )
    .with_note(format!("final test mse {finals:?}")))
}
