//! Layered models `X_{l+1} = φ_l(BN(η_l(X_l) Θ_l))` over node-stacked batches.
//!
//! Samples with `n` nodes are stacked vertically, so a batch of `B` samples
//! with `C` channels is a `(B·n) × C` matrix. Dense (non-graph) data uses
//! `n = 1`. Layer indices in this module are 0-based.

mod backward;
mod filter;
mod forward;
mod loss;
mod params;

pub use backward::Backward;
pub(crate) use backward::layer_grad;
pub use filter::FilterKind;
pub use forward::{BnTrace, ForwardTrace, LayerTrace, Mode};
pub use loss::LossKind;
pub use params::{params_distance_sq, LayerParams};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{gaussian_with, ActivationKind, Matrix, RngStream};
use filter::FilterBank;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BnMode {
    #[default]
    Off,
    On,
    /// Batch statistics until the network is frozen at `freeze_epoch`, running
    /// statistics afterwards.
    HalfFrozen { freeze_epoch: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub filter: FilterKind,
    pub activation: ActivationKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub bias: bool,
    #[serde(default)]
    pub bn: BnMode,
}

impl LayerSpec {
    pub fn new(filter: FilterKind, activation: ActivationKind, in_channels: usize, out_channels: usize) -> Self {
        Self {
            filter,
            activation,
            in_channels,
            out_channels,
            bias: true,
            bn: BnMode::Off,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn with_bn(mut self, bn: BnMode) -> Self {
        self.bn = bn;
        self
    }

    /// Width of `η(X)` and hence the number of weight rows.
    pub fn expanded_in(&self) -> usize {
        self.in_channels * self.filter.width_multiplier()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights uniform on `±√(6/(fan_in+fan_out))`, zero bias.
    #[default]
    Glorot,
    /// Every weight and bias i.i.d. `N(1, 1)`.
    Teacher,
}

/// Running batch-norm statistics (biased variance).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnRunning {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnRunning {
    fn new(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            var: vec![1.0; width],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<LayerSpec>,
    nodes: usize,
    graph: Option<Graph>,
    params: Vec<LayerParams>,
    running: Vec<Option<BnRunning>>,
    bn_frozen: bool,
    banks: Vec<FilterBank>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    layers: Vec<LayerSpec>,
    nodes: usize,
    graph: Option<Graph>,
    params: Vec<LayerParams>,
    running: Vec<Option<BnRunning>>,
    bn_frozen: bool,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkRepr {
            layers: self.layers.clone(),
            nodes: self.nodes,
            graph: self.graph.clone(),
            params: self.params.clone(),
            running: self.running.clone(),
            bn_frozen: self.bn_frozen,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = NetworkRepr::deserialize(d)?;
        let mut net = Network::new(r.layers, r.graph, r.nodes, r.params).map_err(serde::de::Error::custom)?;
        if r.running.len() != net.running.len() {
            return Err(serde::de::Error::custom("running statistics do not match layers"));
        }
        net.running = r.running;
        net.bn_frozen = r.bn_frozen;
        Ok(net)
    }
}

fn validate_specs(layers: &[LayerSpec], graph: Option<&Graph>, nodes: usize) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("network needs at least one layer".into()));
    }
    if nodes == 0 {
        return Err(Error::InvalidArgument("node count must be positive".into()));
    }
    if let Some(g) = graph {
        if g.n() != nodes {
            return Err(Error::shape("Network", format!("graph has {} nodes, samples have {nodes}", g.n())));
        }
    }
    for (l, spec) in layers.iter().enumerate() {
        spec.activation.validate()?;
        if spec.in_channels == 0 || spec.out_channels == 0 {
            return Err(Error::InvalidArgument(format!("layer {l} has zero width")));
        }
        if let FilterKind::Chebyshev { k: 0 } = spec.filter {
            return Err(Error::InvalidArgument(format!("layer {l}: Chebyshev order must be >= 1")));
        }
        if spec.activation == ActivationKind::Softmax && l + 1 != layers.len() {
            return Err(Error::InvalidArgument(format!("layer {l}: softmax only allowed in the last layer")));
        }
        if let BnMode::HalfFrozen { freeze_epoch: 0 } = spec.bn {
            return Err(Error::InvalidArgument(format!("layer {l}: freeze epoch must be >= 1")));
        }
        if spec.filter.needs_graph() && graph.is_none() {
            return Err(Error::GraphMissing(l));
        }
        if l > 0 && layers[l - 1].out_channels != spec.in_channels {
            return Err(Error::shape(
                "Network",
                format!(
                    "layer {} outputs {} channels but layer {l} expects {}",
                    l - 1,
                    layers[l - 1].out_channels,
                    spec.in_channels
                ),
            ));
        }
    }
    Ok(())
}

impl Network {
    /// Network with explicit parameters.
    pub fn new(layers: Vec<LayerSpec>, graph: Option<Graph>, nodes: usize, params: Vec<LayerParams>) -> Result<Self> {
        validate_specs(&layers, graph.as_ref(), nodes)?;
        let banks = layers
            .iter()
            .enumerate()
            .map(|(l, s)| {
                FilterBank::build(s.filter, graph.as_ref()).map_err(|e| match e {
                    Error::GraphMissing(_) => Error::GraphMissing(l),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let running = layers
            .iter()
            .map(|s| (s.bn != BnMode::Off).then(|| BnRunning::new(s.out_channels)))
            .collect();
        let mut net = Self {
            layers,
            nodes,
            graph,
            params: Vec::new(),
            running,
            bn_frozen: false,
            banks,
        };
        net.set_params(params)?;
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.graph.as_ref()
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn last_activation(&self) -> ActivationKind {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn output_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].out_channels
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn set_params(&mut self, params: Vec<LayerParams>) -> Result<()> {
        if params.len() != self.layers.len() {
            return Err(Error::shape("Network::set_params", "layer count mismatch"));
        }
        for (l, (spec, p)) in self.layers.iter().zip(&params).enumerate() {
            if p.weight.shape() != (spec.expanded_in(), spec.out_channels) || p.bias.is_some() != spec.bias {
                return Err(Error::shape("Network::set_params", format!("layer {l} parameter shape")));
            }
            if let Some(b) = &p.bias {
                if b.shape() != (1, spec.out_channels) {
                    return Err(Error::shape("Network::set_params", format!("layer {l} bias shape")));
                }
            }
            if !p.is_finite() {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn running_stats(&self) -> &[Option<BnRunning>] {
        &self.running
    }

    pub fn bn_frozen(&self) -> bool {
        self.bn_frozen
    }

    /// Switches half-frozen layers to their running statistics.
    pub fn set_bn_frozen(&mut self, frozen: bool) {
        self.bn_frozen = frozen;
    }

    pub fn has_bn(&self) -> bool {
        self.layers.iter().any(|s| s.bn != BnMode::Off)
    }

    /// Earliest half-frozen freeze epoch, if any layer uses one.
    pub fn freeze_epoch(&self) -> Option<usize> {
        self.layers
            .iter()
            .filter_map(|s| match s.bn {
                BnMode::HalfFrozen { freeze_epoch } => Some(freeze_epoch),
                _ => None,
            })
            .min()
    }

    pub(crate) fn bank(&self, l: usize) -> &FilterBank {
        &self.banks[l]
    }

    /// Stacks per-sample matrices into one batch matrix.
    pub fn stack(samples: &[&Matrix]) -> Result<Matrix> {
        Matrix::vstack(samples)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(format!("serialize network: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("parse network: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Draws parameters for `layers` under `scheme`.
pub fn init_params(
    layers: Vec<LayerSpec>,
    graph: Option<Graph>,
    nodes: usize,
    scheme: InitScheme,
    stream: RngStream,
) -> Result<Network> {
    validate_specs(&layers, graph.as_ref(), nodes)?;
    let mut rng = stream.rng();
    let params = layers
        .iter()
        .map(|s| {
            let (rows, cols) = (s.expanded_in(), s.out_channels);
            match scheme {
                InitScheme::Glorot => {
                    let limit = (6.0 / (rows + cols) as f64).sqrt();
                    let values = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
                    LayerParams::new(
                        Matrix::from_vec(rows, cols, values)?,
                        s.bias.then(|| Matrix::zeros(1, cols)),
                    )
                }
                InitScheme::Teacher => {
                    let w = gaussian_with(&mut rng, 1.0, 1.0, rows, cols);
                    let b = s.bias.then(|| gaussian_with(&mut rng, 1.0, 1.0, 1, cols));
                    LayerParams::new(w, b)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(layers, graph, nodes, params)
}
