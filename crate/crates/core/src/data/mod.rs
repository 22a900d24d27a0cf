//! Synthetic generators and dataset containers.
//!
//! Samples are stored node-stacked like network batches: sample `i` occupies
//! rows `i·n .. (i+1)·n` of `features`, `labels` and `expectations`.

mod io;
mod panel;

pub use io::{read_dataset_dir, write_dataset_dir, DatasetMeta};
pub use panel::{
    knn_graph_from_labels, lag_features, load_panel_csv, synthetic_panel, write_panel_csv, PanelSpec,
};

use rand::Rng;
use rand_distr::{Bernoulli, Distribution};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::network::{init_params, FilterKind, InitScheme, LayerParams, LayerSpec, Mode, Network};
use crate::numerics::rng::streams;
use crate::numerics::{gaussian_with, ActivationKind, Matrix, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub nodes: usize,
    pub features: Matrix,
    pub labels: Matrix,
    /// True `E[Y|X]` for teacher-generated data.
    pub expectations: Option<Matrix>,
    pub graph: Option<Graph>,
}

impl Dataset {
    pub fn new(nodes: usize, features: Matrix, labels: Matrix, expectations: Option<Matrix>, graph: Option<Graph>) -> Result<Self> {
        if nodes == 0 || !features.rows().is_multiple_of(nodes) || features.rows() != labels.rows() {
            return Err(Error::shape(
                "Dataset",
                format!("features {:?}, labels {:?}, {nodes} nodes", features.shape(), labels.shape()),
            ));
        }
        if let Some(e) = &expectations {
            if e.shape() != labels.shape() {
                return Err(Error::shape("Dataset", "expectations and labels differ in shape"));
            }
            if e.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument("expectations must lie in [0,1]".into()));
            }
        }
        if labels.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if let Some(g) = &graph {
            if g.n() != nodes {
                return Err(Error::shape("Dataset", "graph size differs from node count"));
            }
        }
        features.ensure_finite("dataset features")?;
        Ok(Self {
            nodes,
            features,
            labels,
            expectations,
            graph,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows() / self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label_dim(&self) -> usize {
        self.labels.cols()
    }

    fn gather(&self, m: &Matrix, idx: &[usize]) -> Matrix {
        let n = self.nodes;
        let mut out = Matrix::zeros(idx.len() * n, m.cols());
        for (k, &i) in idx.iter().enumerate() {
            for r in 0..n {
                out.row_mut(k * n + r).copy_from_slice(m.row(i * n + r));
            }
        }
        out
    }

    /// Stacked features and labels of the given samples, in order.
    pub fn batch(&self, idx: &[usize]) -> (Matrix, Matrix) {
        (self.gather(&self.features, idx), self.gather(&self.labels, idx))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            nodes: self.nodes,
            features: self.gather(&self.features, idx),
            labels: self.gather(&self.labels, idx),
            expectations: self.expectations.as_ref().map(|e| self.gather(e, idx)),
            graph: self.graph.clone(),
        }
    }

    /// Per-sample feature matrices.
    pub fn samples(&self) -> Vec<Matrix> {
        (0..self.len()).map(|i| self.features.row_block(i * self.nodes, self.nodes)).collect()
    }
}

/// First `n_train` samples for training and the rest for testing.
pub fn train_test_split(data: &Dataset, n_train: usize) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_train >= data.len() {
        return Err(Error::InvalidArgument(format!(
            "training size {n_train} must be in [1, {})",
            data.len()
        )));
    }
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..data.len()).collect();
    Ok((data.subset(&train), data.subset(&test)))
}

fn bernoulli_labels(expect: &Matrix, stream: RngStream) -> Matrix {
    let mut rng = stream.rng();
    let values = expect
        .as_slice()
        .iter()
        .map(|&p| Bernoulli::new(p).expect("probability in [0,1]").sample(&mut rng) as u8 as f64)
        .collect();
    Matrix::from_vec(expect.rows(), expect.cols(), values).expect("same shape")
}

fn categorical_labels(expect: &Matrix, stream: RngStream) -> Matrix {
    let mut rng = stream.rng();
    let mut out = Matrix::zeros(expect.rows(), expect.cols());
    for i in 0..expect.rows() {
        let u: f64 = rng.random();
        let row = expect.row(i);
        let mut acc = 0.0;
        let mut pick = row.len() - 1;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = j;
                break;
            }
        }
        out[(i, pick)] = 1.0;
    }
    out
}

/// The single-layer probit link `E[y|x] = Φ(xᵀβ + b)`.
pub fn probit_teacher(beta: &[f64], bias: f64) -> Result<Network> {
    let spec = vec![LayerSpec::new(FilterKind::Dense, ActivationKind::NormalCdf, beta.len(), 1)];
    let params = vec![LayerParams::new(Matrix::column(beta), Some(Matrix::row_vector(&[bias])))?];
    Network::new(spec, None, 1, params)
}

/// Draws `n` samples from a probit teacher with features `N(0.05, 1)`.
pub fn probit_from_teacher(teacher: &Network, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = RngStream::new(seed, streams::DATA).rng();
    let x = gaussian_with(&mut rng, 0.05, 1.0, n, teacher.input_channels());
    let expect = teacher.predict(&x, Mode::Eval)?;
    let labels = bernoulli_labels(&expect, RngStream::new(seed, streams::LABELS));
    Dataset::new(1, x, labels, Some(expect), None)
}

/// Probit regression with `β ~ N(−0.05, 1)`, `b ~ N(−0.1, 1)`.
pub fn gen_probit(n: usize, dim: usize, seed: u64) -> Result<(Dataset, Network)> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidArgument("probit needs n, dim >= 1".into()));
    }
    let mut rng = RngStream::new(seed, streams::TEACHER).rng();
    let beta = gaussian_with(&mut rng, -0.05, 1.0, dim, 1);
    let bias = gaussian_with(&mut rng, -0.1, 1.0, 1, 1)[(0, 0)];
    let teacher = probit_teacher(beta.as_slice(), bias)?;
    Ok((probit_from_teacher(&teacher, n, seed)?, teacher))
}

/// Two interleaved half circles. Classes alternate so every prefix is
/// balanced; labels are one-hot with class 0 the upper moon.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("two-moon sample count must be even, got {n}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = RngStream::new(seed, streams::DATA).rng();
    let mut x = Matrix::zeros(n, 2);
    let mut y = Matrix::zeros(n, 2);
    for i in 0..n {
        let t = rng.random_range(0.0..=std::f64::consts::PI);
        let class = i % 2;
        let (a, b) = if class == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        let e = gaussian_with(&mut rng, 0.0, noise, 1, 2);
        x[(i, 0)] = a + e[(0, 0)];
        x[(i, 1)] = b + e[(0, 1)];
        y[(i, class)] = 1.0;
    }
    Dataset::new(1, x, y, None, None)
}

/// Teacher-student data on a graph: the teacher draws every parameter from
/// `N(1, 1)` under `teacher_seed`, features are `N(0, 1)` under `data_seed`,
/// and labels are Bernoulli (sigmoid) or categorical (softmax) draws from the
/// teacher's output.
pub fn gen_gcn_teacher(
    graph: &Graph,
    n: usize,
    specs: Vec<LayerSpec>,
    teacher_seed: u64,
    data_seed: u64,
) -> Result<(Dataset, Network)> {
    let last = specs.last().ok_or_else(|| Error::InvalidArgument("empty teacher".into()))?.activation;
    if !matches!(last, ActivationKind::Sigmoid | ActivationKind::Softmax) {
        return Err(Error::InvalidArgument("teacher output must be sigmoid or softmax".into()));
    }
    let teacher = init_params(
        specs,
        Some(graph.clone()),
        graph.n(),
        InitScheme::Teacher,
        RngStream::new(teacher_seed, streams::TEACHER),
    )?;
    let data = teacher_dataset(&teacher, n, data_seed)?;
    Ok((data, teacher))
}

/// Fresh samples from an existing graph teacher.
pub fn teacher_dataset(teacher: &Network, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let nodes = teacher.nodes();
    let x = crate::numerics::gaussian(RngStream::new(seed, streams::DATA), 0.0, 1.0, n * nodes, teacher.input_channels());
    let expect = teacher.predict(&x, Mode::Eval)?;
    let labels = if teacher.last_activation() == ActivationKind::Softmax {
        categorical_labels(&expect, RngStream::new(seed, streams::LABELS))
    } else {
        bernoulli_labels(&expect, RngStream::new(seed, streams::LABELS))
    };
    Dataset::new(nodes, x, labels, Some(expect), teacher.graph().cloned())
}
