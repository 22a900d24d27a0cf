//! Builds the data, teacher and student network for one (setting, seed).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::data::{
    gen_gcn_teacher, gen_probit, gen_two_moons, knn_graph_from_labels, lag_features, load_panel_csv, synthetic_panel,
    train_test_split, Dataset, PanelSpec,
};
use crate::error::{Error, Result};
use crate::graph::{erdos_renyi, perturb_edges, Graph};
use crate::network::{init_params, FilterKind, InitScheme, LayerSpec, Network};
use crate::numerics::rng::streams;
use crate::numerics::{ActivationKind, Matrix, RngStream};

/// One point of an experiment's sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    /// Probit feature dimension.
    Dim(usize),
    /// Hidden width, and whether the student sees a perturbed graph.
    Hidden { width: usize, perturbed: bool },
}

impl Setting {
    pub fn label(self) -> String {
        match self {
            Setting::Dim(d) => format!("dim={d}"),
            Setting::Hidden { width, perturbed: false } => format!("h={width}"),
            Setting::Hidden { width, perturbed: true } => format!("h={width}/perturbed"),
        }
    }
}

/// Sweep of a comparison run. Graph recovery compares on the known graph.
pub fn compare_settings(cfg: &ExperimentConfig) -> Vec<Setting> {
    match cfg.experiment {
        ExperimentKind::Probit => cfg.data.dims.iter().map(|&d| Setting::Dim(d)).collect(),
        _ => cfg
            .model
            .hidden
            .iter()
            .map(|&width| Setting::Hidden { width, perturbed: false })
            .collect(),
    }
}

/// Known and perturbed graph for every hidden width.
pub fn recover_settings(cfg: &ExperimentConfig) -> Vec<Setting> {
    cfg.model
        .hidden
        .iter()
        .flat_map(|&width| [false, true].map(|perturbed| Setting::Hidden { width, perturbed }))
        .collect()
}

pub struct Instance {
    pub setting: Setting,
    pub seed: u64,
    pub student: Network,
    pub train: Dataset,
    pub test: Dataset,
    pub teacher: Option<Network>,
}

fn student(layers: Vec<LayerSpec>, graph: Option<Graph>, nodes: usize, seed: u64) -> Result<Network> {
    init_params(layers, graph, nodes, InitScheme::Glorot, RngStream::new(seed, streams::INIT))
}

fn output_activation(out: usize) -> ActivationKind {
    if out == 1 {
        ActivationKind::Sigmoid
    } else {
        ActivationKind::Softmax
    }
}

/// Teacher graph of the graph-recovery experiment.
pub fn recovery_graph(cfg: &ExperimentConfig) -> Result<Graph> {
    erdos_renyi(cfg.data.graph_nodes, cfg.data.edge_prob, RngStream::new(cfg.data.teacher_seed, streams::GRAPH))
}

/// The graph the student sees when the edge set is perturbed.
pub fn perturbed_graph(cfg: &ExperimentConfig, known: &Graph) -> Result<Graph> {
    let d = &cfg.data;
    perturb_edges(known, d.perturb_frac, RngStream::new(d.teacher_seed, streams::PERTURB), d.perturb_mode)
}

/// Teacher-student GCN data: the teacher has one ReLU hidden layer and is
/// shared by every trial; `seed` draws the samples.
pub fn recovery_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Network)> {
    let d = &cfg.data;
    let g = recovery_graph(cfg)?;
    let teacher = vec![
        LayerSpec::new(FilterKind::Gcn, ActivationKind::Relu, d.channels_in, d.teacher_hidden),
        LayerSpec::new(FilterKind::Gcn, output_activation(d.channels_out), d.teacher_hidden, d.channels_out),
    ];
    gen_gcn_teacher(&g, d.n_train + d.n_test, teacher, d.teacher_seed, seed)
}

/// Panel labels, its graph and lagged dataset split chronologically.
pub fn panel_data(cfg: &ExperimentConfig, seed: u64, base: &Path) -> Result<(Dataset, Dataset)> {
    let d = &cfg.data;
    let panel = if d.panel_csv.is_empty() {
        synthetic_panel(d.panel_nodes, d.panel_length, d.classes, seed)?.0
    } else {
        let path = base.join(&d.panel_csv);
        load_panel_csv(&path, &PanelSpec::default())?.2
    };
    let steps = panel.rows();
    if steps <= d.lag + 1 {
        return Err(Error::InvalidArgument(format!(
            "panel of length {steps} leaves {} lagged samples for lag {}; need at least 2",
            steps.saturating_sub(d.lag),
            d.lag
        )));
    }
    let samples = steps - d.lag;
    let n_train = ((samples as f64) * d.train_fraction).floor() as usize;
    let n_train = n_train.clamp(1, samples - 1);
    // neighbours come from the time steps whose labels are used for training
    let train_rows = Matrix::from_vec(
        d.lag + n_train,
        panel.cols(),
        panel.as_slice()[..(d.lag + n_train) * panel.cols()].to_vec(),
    )?;
    let graph = knn_graph_from_labels(&train_rows, d.knn)?;
    let data = lag_features(&panel, d.lag, d.classes, Some(graph))?;
    train_test_split(&data, n_train)
}

/// Builds the instance of `setting` for `seed`. `base` resolves relative
/// data paths.
pub fn build_instance(cfg: &ExperimentConfig, setting: Setting, seed: u64, base: &Path) -> Result<Instance> {
    let d = &cfg.data;
    let bn = cfg.train.bn_mode();
    let act = cfg.model.activation;
    let (student, data, teacher) = match (cfg.experiment, setting) {
        (ExperimentKind::Probit, Setting::Dim(dim)) => {
            let (data, teacher) = gen_probit(d.n_train + d.n_test, dim, seed)?;
            let spec = vec![LayerSpec::new(FilterKind::Dense, ActivationKind::NormalCdf, dim, 1).with_bn(bn)];
            (student(spec, None, 1, seed)?, data, Some(teacher))
        }
        (ExperimentKind::TwoMoon, Setting::Hidden { width, .. }) => {
            let data = gen_two_moons(d.n_train + d.n_test, d.noise, seed)?;
            let spec = vec![
                LayerSpec::new(FilterKind::Dense, act, 2, width).with_bn(bn),
                LayerSpec::new(FilterKind::Dense, ActivationKind::Softmax, width, 2),
            ];
            (student(spec, None, 1, seed)?, data, None)
        }
        (ExperimentKind::GcnRecover, Setting::Hidden { width, perturbed }) => {
            let (data, teacher) = recovery_data(cfg, seed)?;
            let known = teacher.graph().expect("graph teacher").clone();
            let g = if perturbed {
                perturbed_graph(cfg, &known)?
            } else {
                known
            };
            let spec = vec![
                LayerSpec::new(FilterKind::Gcn, act, d.channels_in, width).with_bn(bn),
                LayerSpec::new(FilterKind::Gcn, output_activation(d.channels_out), width, d.channels_out),
            ];
            (student(spec, Some(g), d.graph_nodes, seed)?, data, Some(teacher))
        }
        (ExperimentKind::Panel, Setting::Hidden { width, .. }) => {
            let (train, test) = panel_data(cfg, seed, base)?;
            let out = train.label_dim();
            let g = train.graph.clone();
            let spec = vec![
                LayerSpec::new(FilterKind::Gcn, act, train.feature_dim(), width).with_bn(bn),
                LayerSpec::new(FilterKind::Gcn, act, width, width).with_bn(bn),
                LayerSpec::new(FilterKind::Gcn, output_activation(out), width, out),
            ];
            let net = student(spec, g, train.nodes, seed)?;
            return Ok(Instance {
                setting,
                seed,
                student: net,
                train,
                test,
                teacher: None,
            });
        }
        (kind, s) => {
            return Err(Error::InvalidArgument(format!(
                "setting {} does not apply to {}",
                s.label(),
                kind.name()
            )))
        }
    };
    let (train, test) = train_test_split(&data, d.n_train)?;
    Ok(Instance {
        setting,
        seed,
        student,
        train,
        test,
        teacher,
    })
}
