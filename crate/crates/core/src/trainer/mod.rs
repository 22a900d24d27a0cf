//! The epoch loop: the VI route, the back-propagation baseline and
//! last-layer operator extrapolation share batching, initialisation, batch
//! normalization scheduling and evaluation, and differ only in the update.

mod history;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use history::{
    dynamics_csv, format_dynamics, total_displacement, DynamicsRow, EvalRecord, Snapshot, Split, TrainHistory,
};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::network::{LayerParams, LossKind, Mode, Network};
use crate::numerics::rng::streams;
use crate::numerics::RngStream;
use crate::vi::{
    adaptive_step, estimate_modulus, last_layer_operator, layer_operators, oe_select_iterate, oe_step,
    vi_step_with_momentum, Momentum, ParamDomain,
};

/// Smallest modulus the adaptive schedule accepts.
pub const MIN_KAPPA: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Svi,
    Sgd,
    /// Operator extrapolation on the last layer only, earlier layers fixed.
    OeLastLayer,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Svi => "svi",
            Method::Sgd => "sgd",
            Method::OeLastLayer => "oe_last_layer",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    Constant { lr: f64 },
    /// `γ_t = 1/(κ̂(t+1))` with `κ̂` estimated once on the training set.
    AdaptiveKappa,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Constant { lr: 0.001 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub step: StepRule,
    pub momentum: f64,
    pub nesterov: bool,
    pub domain: ParamDomain,
    pub loss: LossKind,
    pub seed: u64,
    /// Evaluate every this many epochs (0: only the first and last epoch).
    pub snapshot_every: usize,
    /// Extrapolation weight `λ` of operator extrapolation.
    pub oe_lambda: f64,
    /// Keep the parameters at every evaluation point.
    pub record_params: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Svi,
            epochs: 1,
            batch_size: 1,
            step: StepRule::default(),
            momentum: 0.0,
            nesterov: false,
            domain: ParamDomain::Unconstrained,
            loss: LossKind::Mse,
            seed: 0,
            snapshot_every: 1,
            oe_lambda: 1.0,
            record_params: false,
        }
    }
}

impl TrainConfig {
    pub fn momentum_rule(&self) -> Momentum {
        Momentum::from_parts(self.momentum, self.nesterov)
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        self.momentum_rule()
            .validate()
            .map_err(|e| Error::config("momentum", e.to_string()))?;
        self.domain.validate().map_err(|e| Error::config("domain", e.to_string()))?;
        match self.step {
            StepRule::Constant { lr } if !(lr >= 0.0 && lr.is_finite()) => {
                return Err(Error::config("lr", format!("must be a non-negative number, got {lr}")));
            }
            StepRule::AdaptiveKappa if !net.last_activation().strongly_monotone_capable() => {
                return Err(Error::config(
                    "step",
                    format!(
                        "adaptive steps need a strongly monotone last activation, not {}",
                        net.last_activation().name()
                    ),
                ));
            }
            _ => {}
        }
        if self.method == Method::OeLastLayer {
            if self.momentum != 0.0 {
                return Err(Error::config("momentum", "operator extrapolation runs without momentum"));
            }
            if !(self.oe_lambda >= 0.0 && self.oe_lambda.is_finite()) {
                return Err(Error::config("oe_lambda", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// One epoch's batches: a fresh uniform shuffle of `0..n` cut into `⌈n/b⌉`
/// contiguous chunks, the last possibly short.
pub fn make_batches(n: usize, b: usize, stream: RngStream) -> Result<Vec<Vec<usize>>> {
    if n == 0 || b == 0 {
        return Err(Error::InvalidArgument(format!("need n ≥ 1 and b ≥ 1, got n={n}, b={b}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream.rng());
    Ok(idx.chunks(b).map(<[usize]>::to_vec).collect())
}

/// Stream for the batches of epoch `epoch`.
pub fn batch_stream(seed: u64, epoch: usize) -> RngStream {
    RngStream::new(seed, streams::BATCHES).split(epoch as u64)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn params_hash(params: &[LayerParams]) -> String {
    sha256_hex(serde_json::to_string(params).expect("parameters serialize").as_bytes())
}

/// Metrics of `net` in evaluation mode on `data`.
pub fn evaluate_dataset(net: &Network, data: &Dataset) -> Result<MetricReport> {
    let preds = net.predict(&data.features, Mode::Eval)?;
    evaluate(&preds, &data.labels, data.nodes, data.expectations.as_ref())
}

fn check_data(net: &Network, data: &Dataset) -> Result<()> {
    if data.nodes != net.nodes() || data.feature_dim() != net.input_channels() || data.label_dim() != net.output_channels() {
        return Err(Error::shape(
            "train",
            format!(
                "dataset ({} nodes, {} features, {} labels) does not fit network ({} nodes, {} in, {} out)",
                data.nodes,
                data.feature_dim(),
                data.label_dim(),
                net.nodes(),
                net.input_channels(),
                net.output_channels()
            ),
        ));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    Ok(())
}

struct Recorder<'a> {
    train: &'a Dataset,
    test: Option<&'a Dataset>,
    keep_params: bool,
}

impl Recorder<'_> {
    fn record(&self, hist: &mut TrainHistory, net: &Network, epoch: usize, iter: usize) -> Result<()> {
        let splits = std::iter::once((Split::Train, self.train)).chain(self.test.map(|t| (Split::Test, t)));
        for (split, data) in splits {
            hist.records.push(EvalRecord {
                epoch,
                iter,
                split,
                metrics: evaluate_dataset(net, data)?,
            });
        }
        if self.keep_params {
            hist.snapshots.push(Snapshot {
                epoch,
                iter,
                params: net.params().to_vec(),
            });
        }
        Ok(())
    }
}

/// Runs `config.epochs` epochs over `train`, evaluating on `train` and `test`
/// at epoch 0, every `snapshot_every` epochs and at the end.
pub fn train(
    mut net: Network,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    config.validate(&net)?;
    check_data(&net, train)?;
    if let Some(t) = test {
        check_data(&net, t)?;
    }
    let mut hist = TrainHistory {
        init_hash: params_hash(net.params()),
        ..TrainHistory::default()
    };
    let recorder = Recorder {
        train,
        test,
        keep_params: config.record_params,
    };
    let n = train.len();
    let per_epoch = n.div_ceil(config.batch_size);
    let depth = net.depth();
    let momentum = config.momentum_rule();

    let kappa = match config.step {
        StepRule::AdaptiveKappa if config.method != Method::OeLastLayer => {
            let k = estimate_modulus(&net, &train.features, Mode::Train)?.kappa;
            if !(k > MIN_KAPPA) {
                return Err(Error::ModulusTooSmall(k));
            }
            Some(k)
        }
        _ => None,
    };
    hist.kappa = kappa;
    let oe_gamma = if config.method == Method::OeLastLayer {
        let lip = estimate_modulus(&net, &train.features, Mode::Train)?.lipschitz;
        if !(lip > 0.0 && lip.is_finite()) {
            return Err(Error::InvalidArgument(format!("Lipschitz estimate {lip} unusable for a step size")));
        }
        Some(1.0 / (4.0 * lip))
    } else {
        None
    };
    hist.oe_gamma = oe_gamma;

    let mut velocity: Vec<LayerParams> = net.params().iter().map(LayerParams::zeros_like).collect();
    let mut oe_iterates = vec![net.params()[depth - 1].clone()];
    let mut prev_op: Option<LayerParams> = None;
    let mut batch_hasher = Sha256::new();

    recorder.record(&mut hist, &net, 0, 0)?;
    for epoch in 0..config.epochs {
        if let Some(f) = net.freeze_epoch() {
            if epoch >= f && !net.bn_frozen() {
                net.set_bn_frozen(true);
            }
        }
        let batches = make_batches(n, config.batch_size, batch_stream(config.seed, epoch))?;
        for (i, idx) in batches.iter().enumerate() {
            let t = epoch * per_epoch + i;
            for &j in idx {
                batch_hasher.update((j as u64).to_le_bytes());
            }
            let (x, y) = train.batch(idx);
            match config.method {
                Method::Svi | Method::Sgd => {
                    let gamma = match config.step {
                        StepRule::Constant { lr } => lr,
                        StepRule::AdaptiveKappa => adaptive_step(kappa.expect("kappa estimated"), t)?,
                    };
                    let lookahead = if let Momentum::Nesterov { .. } = momentum {
                        let mut ahead = net.clone();
                        let params = net
                            .params()
                            .iter()
                            .zip(&velocity)
                            .map(|(p, v)| momentum.lookahead(p, v, gamma))
                            .collect::<Result<Vec<_>>>()?;
                        ahead.set_params(params)?;
                        Some(ahead)
                    } else {
                        None
                    };
                    let at = lookahead.as_ref().unwrap_or(&net);
                    let (_, trace) = at.forward(&x, Mode::Train)?;
                    let ops: Vec<LayerParams> = match config.method {
                        Method::Svi => layer_operators(at, &trace, &y, config.loss)?
                            .into_iter()
                            .map(|o| o.value)
                            .collect(),
                        _ => at.param_gradient_sgd(&trace, config.loss, &y)?,
                    };
                    net.update_running_stats(&trace);
                    let next = net
                        .params()
                        .iter()
                        .zip(&ops)
                        .zip(velocity.iter_mut())
                        .map(|((p, op), v)| vi_step_with_momentum(p, op, gamma, config.domain, momentum, v))
                        .collect::<Result<Vec<_>>>()?;
                    net.set_params(next)?;
                }
                Method::OeLastLayer => {
                    let (_, trace) = net.forward(&x, Mode::Train)?;
                    net.update_running_stats(&trace);
                    let op = last_layer_operator(&net, &trace, &y)?.value;
                    let prev = prev_op.take().unwrap_or_else(|| op.clone());
                    let gamma = oe_gamma.expect("step size computed");
                    let last = oe_step(&net.params()[depth - 1], &prev, &op, gamma, config.oe_lambda, config.domain)?;
                    net.params_mut()[depth - 1] = last.clone();
                    oe_iterates.push(last);
                    prev_op = Some(op);
                }
            }
            if !net.params().iter().all(LayerParams::is_finite) {
                return Err(Error::NonFinite("training update"));
            }
            hist.iterations = t + 1;
        }
        let done = epoch + 1;
        let due = config.snapshot_every > 0 && done % config.snapshot_every == 0;
        if done < config.epochs && due {
            let iter = hist.iterations;
            recorder.record(&mut hist, &net, done, iter)?;
        }
    }
    if config.method == Method::OeLastLayer && oe_iterates.len() >= 2 {
        let stream = RngStream::new(config.seed, streams::SELECT);
        let (r, chosen) = oe_select_iterate(&oe_iterates, stream)?;
        net.params_mut()[depth - 1] = chosen.clone();
        hist.selected_iterate = Some(r);
    }
    if config.epochs > 0 {
        let iter = hist.iterations;
        recorder.record(&mut hist, &net, config.epochs, iter)?;
    }
    hist.batch_hash = hex::encode(batch_hasher.finalize());
    Ok((net, hist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gcn_teacher;
    use crate::graph::erdos_renyi;
    use crate::network::{init_params, BnMode, FilterKind, InitScheme, LayerSpec};
    use crate::numerics::ActivationKind;

    #[test]
    fn batch_shapes() {
        let s = RngStream::new(1, 3);
        let b = make_batches(5, 2, s).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..5).collect::<Vec<_>>());
        assert_eq!(make_batches(5, 9, s).unwrap().len(), 1);
        assert_eq!(make_batches(5, 2, s).unwrap(), b);
        assert_ne!(make_batches(50, 50, batch_stream(1, 0)).unwrap(), make_batches(50, 50, batch_stream(1, 1)).unwrap());
        assert!(make_batches(0, 2, s).is_err());
    }

    fn problem(activation: ActivationKind, out: usize, bn: BnMode) -> (Network, Dataset, Dataset) {
        let g = erdos_renyi(6, 0.5, RngStream::new(3, streams::GRAPH)).unwrap();
        let teacher = vec![LayerSpec::new(FilterKind::Gcn, activation, 2, out)];
        let (data, _) = gen_gcn_teacher(&g, 60, teacher, 3, 4).unwrap();
        let (tr, te) = crate::data::train_test_split(&data, 40).unwrap();
        let spec = vec![LayerSpec::new(FilterKind::Gcn, activation, 2, out).with_bn(bn)];
        let net = init_params(spec, Some(g), 6, InitScheme::Glorot, RngStream::new(3, streams::INIT)).unwrap();
        (net, tr, te)
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (net, tr, te) = problem(ActivationKind::Sigmoid, 1, BnMode::Off);
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (out, hist) = train(net.clone(), &tr, Some(&te), &cfg).unwrap();
        assert_eq!(out.params(), net.params());
        assert_eq!(hist.records.len(), 2);
        assert!(hist.records.iter().all(|r| r.epoch == 0 && r.iter == 0));
    }

    #[test]
    fn vi_and_backprop_agree_bitwise_for_canonical_links() {
        for (act, out, loss) in [
            (ActivationKind::Sigmoid, 1, LossKind::BinaryCe),
            (ActivationKind::Softmax, 3, LossKind::CategoricalCe),
        ] {
            let (net, tr, te) = problem(act, out, BnMode::Off);
            for (mu, nesterov) in [(0.0, false), (0.9, false), (0.9, true)] {
                let cfg = TrainConfig {
                    epochs: 5,
                    batch_size: 7,
                    step: StepRule::Constant { lr: 0.05 },
                    momentum: mu,
                    nesterov,
                    loss,
                    seed: 9,
                    record_params: true,
                    ..TrainConfig::default()
                };
                let (a, ha) = train(net.clone(), &tr, Some(&te), &cfg).unwrap();
                let sgd = TrainConfig {
                    method: Method::Sgd,
                    ..cfg.clone()
                };
                let (b, hb) = train(net.clone(), &tr, Some(&te), &sgd).unwrap();
                assert_eq!(a.params(), b.params());
                assert_eq!(ha, hb);
            }
        }
    }

    #[test]
    fn fairness_and_determinism() {
        let (net, tr, te) = problem(ActivationKind::Sigmoid, 1, BnMode::HalfFrozen { freeze_epoch: 2 });
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 6,
            step: StepRule::Constant { lr: 0.1 },
            seed: 5,
            ..TrainConfig::default()
        };
        let (_, svi) = train(net.clone(), &tr, Some(&te), &cfg).unwrap();
        let (_, again) = train(net.clone(), &tr, Some(&te), &cfg).unwrap();
        let sgd_cfg = TrainConfig {
            method: Method::Sgd,
            ..cfg.clone()
        };
        let (_, sgd) = train(net.clone(), &tr, Some(&te), &sgd_cfg).unwrap();
        assert_eq!(svi.batch_hash, sgd.batch_hash);
        assert_eq!(svi.init_hash, sgd.init_hash);
        let h = |x: &TrainHistory| sha256_hex(serde_json::to_string(x).unwrap().as_bytes());
        assert_eq!(h(&svi), h(&again));
        let other = TrainConfig { seed: 6, ..cfg };
        assert_ne!(train(net, &tr, Some(&te), &other).unwrap().1.batch_hash, svi.batch_hash);
    }

    #[test]
    fn evaluation_cadence() {
        let (net, tr, _) = problem(ActivationKind::Sigmoid, 1, BnMode::Off);
        let cfg = TrainConfig {
            epochs: 7,
            batch_size: 10,
            snapshot_every: 3,
            record_params: true,
            ..TrainConfig::default()
        };
        let (_, h) = train(net, &tr, None, &cfg).unwrap();
        let epochs: Vec<_> = h.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 3, 6, 7]);
        let iters: Vec<_> = h.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 12, 24, 28]);
        assert!(iters.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(h.snapshots.len(), 4);
    }

    #[test]
    fn adaptive_schedule_guards() {
        let (net, tr, _) = problem(ActivationKind::Softmax, 2, BnMode::Off);
        let cfg = TrainConfig {
            step: StepRule::AdaptiveKappa,
            ..TrainConfig::default()
        };
        assert!(matches!(train(net, &tr, None, &cfg), Err(Error::Config { .. })));
        let (net, tr, _) = problem(ActivationKind::Sigmoid, 1, BnMode::Off);
        let (_, h) = train(net, &tr, None, &TrainConfig { epochs: 2, batch_size: 5, ..cfg }).unwrap();
        assert!(h.kappa.unwrap() > MIN_KAPPA);
    }

    #[test]
    fn operator_extrapolation_selects_an_iterate() {
        let (net, tr, te) = problem(ActivationKind::Softmax, 3, BnMode::Off);
        let cfg = TrainConfig {
            method: Method::OeLastLayer,
            epochs: 3,
            batch_size: 10,
            seed: 2,
            ..TrainConfig::default()
        };
        let (_, h) = train(net, &tr, Some(&te), &cfg).unwrap();
        let r = h.selected_iterate.unwrap();
        assert!((2..=13).contains(&r));
        assert!(h.oe_gamma.unwrap() > 0.0);
        let bad = TrainConfig { momentum: 0.5, ..cfg };
        let (net, tr, _) = problem(ActivationKind::Softmax, 3, BnMode::Off);
        assert!(train(net, &tr, None, &bad).is_err());
    }

    #[test]
    fn half_frozen_bn_freezes() {
        let (net, tr, _) = problem(ActivationKind::Sigmoid, 1, BnMode::HalfFrozen { freeze_epoch: 2 });
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 10,
            ..TrainConfig::default()
        };
        let (out, _) = train(net.clone(), &tr, None, &cfg).unwrap();
        assert!(!out.bn_frozen());
        let (out, _) = train(net, &tr, None, &TrainConfig { epochs: 3, ..cfg }).unwrap();
        assert!(out.bn_frozen());
    }

    #[test]
    fn csv_layout() {
        let (net, tr, te) = problem(ActivationKind::Sigmoid, 1, BnMode::Off);
        let (_, h) = train(net, &tr, Some(&te), &TrainConfig::default()).unwrap();
        let csv = h.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,iter,split,metric,value"));
        assert!(lines.clone().any(|l| l.starts_with("1,40,test,model_linf,")));
        assert!(lines.all(|l| l.split(',').count() == 5));
    }
}
