//! Declarative experiment configuration in TOML.
//!
//! A file names an `experiment` and overrides any subset of the preset for
//! that experiment; everything else takes the preset value. Unknown keys are
//! rejected with the offending line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PerturbMode;
use crate::network::{BnMode, LossKind};
use crate::numerics::ActivationKind;
use crate::trainer::{Method, StepRule, TrainConfig};
use crate::vi::ParamDomain;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Probit,
    TwoMoon,
    GcnRecover,
    Panel,
    TheoryCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Probit => "probit",
            ExperimentKind::TwoMoon => "two-moon",
            ExperimentKind::GcnRecover => "gcn-recover",
            ExperimentKind::Panel => "panel",
            ExperimentKind::TheoryCheck => "theory-check",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnChoice {
    #[default]
    Off,
    On,
    HalfFrozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Method used by the `train` command; comparisons run both.
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adaptive_kappa: bool,
    pub momentum: f64,
    pub nesterov: bool,
    /// Radius of the parameter ball; 0 leaves parameters unconstrained.
    pub ball_radius: f64,
    pub loss: LossKind,
    pub snapshot_every: usize,
    pub bn: BnChoice,
    /// Fraction of epochs after which half-frozen batch norm stops
    /// updating its statistics.
    pub freeze_fraction: f64,
    pub record_params: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            method: Method::Svi,
            epochs: 200,
            batch_size: 200,
            lr: 0.005,
            adaptive_kappa: false,
            momentum: 0.9,
            nesterov: false,
            ball_radius: 0.0,
            loss: LossKind::Mse,
            snapshot_every: 1,
            bn: BnChoice::Off,
            freeze_fraction: 0.5,
            record_params: false,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, method: Method, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            epochs: self.epochs,
            batch_size: self.batch_size,
            step: if self.adaptive_kappa {
                StepRule::AdaptiveKappa
            } else {
                StepRule::Constant { lr: self.lr }
            },
            momentum: self.momentum,
            nesterov: self.nesterov,
            domain: if self.ball_radius > 0.0 {
                ParamDomain::EuclideanBall {
                    radius: self.ball_radius,
                }
            } else {
                ParamDomain::Unconstrained
            },
            loss: self.loss,
            seed,
            snapshot_every: self.snapshot_every,
            oe_lambda: 1.0,
            record_params: self.record_params,
        }
    }

    pub fn bn_mode(&self) -> BnMode {
        match self.bn {
            BnChoice::Off => BnMode::Off,
            BnChoice::On => BnMode::On,
            BnChoice::HalfFrozen => BnMode::HalfFrozen {
                freeze_epoch: (self.epochs as f64 * self.freeze_fraction).ceil() as usize,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_train: usize,
    pub n_test: usize,
    /// Feature dimensions swept by the probit experiment.
    pub dims: Vec<usize>,
    /// Two-moon coordinate noise.
    pub noise: f64,
    pub graph_nodes: usize,
    pub edge_prob: f64,
    pub perturb_frac: f64,
    pub perturb_mode: PerturbMode,
    pub channels_in: usize,
    pub channels_out: usize,
    pub teacher_hidden: usize,
    /// Seed of the graph, its perturbation and the teacher parameters; trial
    /// seeds only drive features, labels and initialisation.
    pub teacher_seed: u64,
    /// Panel CSV; empty selects the synthetic panel generator.
    pub panel_csv: String,
    pub lag: usize,
    pub knn: usize,
    pub classes: usize,
    pub panel_nodes: usize,
    pub panel_length: usize,
    /// Leading fraction of the panel used for training.
    pub train_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 500,
            dims: vec![50],
            noise: 0.1,
            graph_nodes: 15,
            edge_prob: 0.15,
            perturb_frac: 0.0,
            perturb_mode: PerturbMode::Literal,
            channels_in: 2,
            channels_out: 1,
            teacher_hidden: 2,
            teacher_seed: 0,
            panel_csv: String::new(),
            lag: 5,
            knn: 4,
            classes: 2,
            panel_nodes: 10,
            panel_length: 400,
            train_fraction: 0.75,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Hidden widths swept by the two-moon, recovery and panel experiments.
    pub hidden: Vec<usize>,
    pub activation: ActivationKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            activation: ActivationKind::Relu,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    /// Names of the checks to run; empty runs the full battery.
    pub checks: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    pub train: TrainSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub theory: TheorySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(ExperimentKind::Probit)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Published settings for each experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut c = Self {
            experiment: kind,
            seeds: vec![0, 1, 2],
            output_dir: format!("out/{}", kind.name()),
            train: TrainSection::default(),
            data: DataSection::default(),
            model: ModelSection::default(),
            theory: TheorySection::default(),
        };
        match kind {
            ExperimentKind::Probit | ExperimentKind::TheoryCheck => {}
            ExperimentKind::TwoMoon => {
                c.data.n_train = 500;
                c.data.n_test = 500;
                c.train.lr = 0.15;
                c.train.batch_size = 100;
                c.train.epochs = 100;
                c.train.momentum = 0.0;
                c.model.hidden = vec![64];
            }
            ExperimentKind::GcnRecover => {
                c.data.n_train = 2000;
                c.data.n_test = 2000;
                c.train.epochs = 200;
                c.train.batch_size = 100;
                c.train.lr = 0.001;
                c.train.momentum = 0.99;
                c.train.nesterov = true;
                c.train.snapshot_every = 5;
                c.data.perturb_frac = 0.2;
                c.model.hidden = vec![2, 4, 8, 16, 32];
            }
            ExperimentKind::Panel => {
                c.train.epochs = 100;
                c.train.batch_size = 30;
                c.train.lr = 0.001;
                c.train.momentum = 0.99;
                c.train.nesterov = true;
                c.model.hidden = vec![16];
            }
        }
        c
    }

    /// Parses `text`, filling unspecified fields from the preset of the named
    /// experiment. `path` is used in diagnostics only.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |e: toml::de::Error| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            reason: e.message().to_string(),
        };
        let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
        // Shape check against the schema, so unknown keys report their line.
        toml::from_str::<ExperimentConfig>(text).map_err(parse_err)?;
        let kind = match table.get("experiment") {
            Some(v) => v
                .clone()
                .try_into::<ExperimentKind>()
                .map_err(|e| Error::config("experiment", e.message().to_string()))?,
            None => return Err(Error::config("experiment", "missing; name one of the presets")),
        };
        let mut base = toml::Table::try_from(Self::preset(kind)).expect("preset serializes");
        merge(&mut base, table);
        let cfg: ExperimentConfig = base.try_into().map_err(parse_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        let d = &self.data;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if t.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if t.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(t.lr >= 0.0 && t.lr.is_finite()) {
            return Err(Error::config("train.lr", "must be a non-negative number"));
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(Error::config("train.momentum", "must lie in [0, 1)"));
        }
        if !(t.ball_radius >= 0.0 && t.ball_radius.is_finite()) {
            return Err(Error::config("train.ball_radius", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&t.freeze_fraction) {
            return Err(Error::config("train.freeze_fraction", "must lie in [0, 1]"));
        }
        if d.n_train == 0 || d.n_test == 0 {
            return Err(Error::config("data.n_train", "train and test sizes must be positive"));
        }
        if !(0.0..1.0).contains(&d.perturb_frac) {
            return Err(Error::config("data.perturb_frac", "must lie in [0, 1)"));
        }
        if !(d.edge_prob > 0.0 && d.edge_prob <= 1.0) {
            return Err(Error::config("data.edge_prob", "must lie in (0, 1]"));
        }
        if !(d.noise >= 0.0) {
            return Err(Error::config("data.noise", "must be non-negative"));
        }
        crate::theory::validate_selection(&self.theory.checks)?;
        match self.experiment {
            ExperimentKind::Probit if d.dims.is_empty() || d.dims.contains(&0) => {
                Err(Error::config("data.dims", "needs positive dimensions"))
            }
            ExperimentKind::TwoMoon if !(d.n_train + d.n_test).is_multiple_of(2) => {
                Err(Error::config("data.n_train", "two-moon sample count must be even"))
            }
            ExperimentKind::TwoMoon | ExperimentKind::GcnRecover | ExperimentKind::Panel
                if self.model.hidden.is_empty() || self.model.hidden.contains(&0) =>
            {
                Err(Error::config("model.hidden", "needs positive widths"))
            }
            ExperimentKind::GcnRecover if d.graph_nodes < 2 || d.channels_in == 0 || d.channels_out == 0 => {
                Err(Error::config("data.graph_nodes", "graph needs at least 2 nodes and positive channels"))
            }
            ExperimentKind::Panel if d.lag == 0 || d.knn == 0 || !(2..=3).contains(&d.classes) => Err(Error::config(
                "data.lag",
                "panel needs lag >= 1, knn >= 1 and 2 or 3 classes",
            )),
            ExperimentKind::Panel if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) => {
                Err(Error::config("data.train_fraction", "must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(text, Path::new("test.toml"))
    }

    #[test]
    fn presets_carry_published_settings() {
        let p = ExperimentConfig::preset(ExperimentKind::Probit);
        assert_eq!((p.data.n_train, p.data.n_test, p.train.batch_size, p.train.epochs), (2000, 500, 200, 200));
        assert_eq!((p.train.lr, p.train.momentum), (0.005, 0.9));
        let m = ExperimentConfig::preset(ExperimentKind::TwoMoon);
        assert_eq!((m.data.n_train, m.train.lr, m.train.batch_size, m.train.epochs), (500, 0.15, 100, 100));
        let g = ExperimentConfig::preset(ExperimentKind::GcnRecover);
        assert_eq!((g.train.lr, g.train.momentum, g.train.nesterov), (0.001, 0.99, true));
    }

    #[test]
    fn overrides_merge_onto_preset() {
        let c = parse("experiment = \"two-moon\"\nseeds = [4]\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(c.seeds, vec![4]);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.lr, 0.15);
        assert_eq!(parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_field_names_line_and_key() {
        let err = parse("experiment = \"probit\"\n[train]\nepochs = 3\nlearning_rate = 0.1\n").unwrap_err();
        match err {
            Error::Parse { line, reason, .. } => {
                assert_eq!(line, 4);
                assert!(reason.contains("learning_rate"), "{reason}");
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse("seeds = [1]\n"), Err(Error::Config { .. })));
        assert!(matches!(
            parse("experiment = \"probit\"\n[train]\nmomentum = 1.5\n"),
            Err(Error::Config { field, .. }) if field == "train.momentum"
        ));
    }

    #[test]
    fn half_frozen_point() {
        let mut t = TrainSection {
            epochs: 7,
            bn: BnChoice::HalfFrozen,
            ..TrainSection::default()
        };
        assert_eq!(t.bn_mode(), BnMode::HalfFrozen { freeze_epoch: 4 });
        t.bn = BnChoice::Off;
        assert_eq!(t.bn_mode(), BnMode::Off);
    }
}
