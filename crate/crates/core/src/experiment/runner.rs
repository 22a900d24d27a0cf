//! Runs sweeps over settings and seeds and writes plot-ready CSV reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::instance::{build_instance, compare_settings, recover_settings, Instance, Setting};
use crate::data::write_dataset_dir;
use crate::error::{Error, Result};
use crate::metrics::{lp_param_error, Norm};
use crate::network::Network;
use crate::theory::{run_checks, TheoryReport};
use crate::trainer::{dynamics_csv, format_dynamics, sha256_hex, train, Method, Split, TrainHistory};

/// Outcome of training one method on one instance.
#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub setting: Setting,
    pub seed: u64,
    pub method: Method,
    pub history: TrainHistory,
    /// Parameter recovery errors when the student has the teacher's shape.
    pub param_errors: BTreeMap<String, f64>,
    pub model: Network,
}

impl RunResult {
    pub fn final_metric(&self, split: Split, metric: &str) -> Option<f64> {
        self.history.final_metric(split, metric)
    }
}

fn param_errors(student: &Network, teacher: Option<&Network>) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    let Some(t) = teacher else { return Ok(out) };
    let same = student.params().len() == t.params().len()
        && student.params().iter().zip(t.params()).all(|(a, b)| a.same_shape(b));
    if same {
        out.insert("param_l2".into(), lp_param_error(student.params(), t.params(), Norm::L2, false)?);
        out.insert("param_linf".into(), lp_param_error(student.params(), t.params(), Norm::Inf, false)?);
        out.insert("param_l2_relative".into(), lp_param_error(student.params(), t.params(), Norm::L2, true)?);
    }
    Ok(out)
}

/// Trains every method on the instance from the same initial network.
pub fn run_instance(cfg: &ExperimentConfig, inst: &Instance, methods: &[Method]) -> Result<Vec<RunResult>> {
    methods
        .iter()
        .map(|&method| {
            let tc = cfg.train.to_train_config(method, inst.seed);
            let (model, history) = train(inst.student.clone(), &inst.train, Some(&inst.test), &tc)?;
            Ok(RunResult {
                setting: inst.setting,
                seed: inst.seed,
                method,
                param_errors: param_errors(&model, inst.teacher.as_ref())?,
                history,
                model,
            })
        })
        .collect()
}

/// All (setting, seed) jobs in parallel; results ordered by setting, seed,
/// then method.
pub fn run_sweep(cfg: &ExperimentConfig, settings: &[Setting], methods: &[Method], base: &Path) -> Result<Vec<RunResult>> {
    let jobs: Vec<(Setting, u64)> = settings
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let nested = jobs
        .par_iter()
        .map(|&(s, seed)| run_instance(cfg, &build_instance(cfg, s, seed, base)?, methods))
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `setting,method,metric,split,mean,stderr` over seeds of the final values.
pub fn summary_csv(results: &[RunResult]) -> String {
    type Key = (Setting, String, &'static str, String);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in results {
        for split in [Split::Train, Split::Test] {
            if let Some(rec) = r.history.records.iter().rev().find(|x| x.split == split) {
                for (name, v) in &rec.metrics.values {
                    groups
                        .entry((r.setting, r.method.name().to_string(), split.name(), name.clone()))
                        .or_default()
                        .push(*v);
                }
            }
        }
        for (name, v) in &r.param_errors {
            groups
                .entry((r.setting, r.method.name().to_string(), "param", name.clone()))
                .or_default()
                .push(*v);
        }
    }
    let mut out = String::from("setting,method,metric,split,mean,stderr\n");
    for ((setting, method, split, metric), values) in &groups {
        let (m, se) = mean_stderr(values);
        let _ = writeln!(out, "{},{},{},{},{},{}", setting.label(), method, metric, split, m, se);
    }
    out
}

/// Per-epoch curves of every run in one long table.
pub fn curves_csv(results: &[RunResult]) -> String {
    let mut out = String::from("setting,seed,method,epoch,iter,split,metric,value\n");
    for r in results {
        for rec in &r.history.records {
            for (name, v) in &rec.metrics.values {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.setting.label(),
                    r.seed,
                    r.method.name(),
                    rec.epoch,
                    rec.iter,
                    rec.split.name(),
                    name,
                    v
                );
            }
        }
    }
    out
}

fn file_stem(r: &RunResult) -> String {
    format!("{}_seed{}_{}", r.setting.label().replace(['=', '/'], "_"), r.seed, r.method.name())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn echo_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write(&out.join("config.toml"), &cfg.to_toml())
}

/// Files written by a command, with their hashes.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            experiment: cfg.experiment.name().into(),
            seeds: cfg.seeds.clone(),
            files: BTreeMap::new(),
        }
    }

    fn scan(&mut self, root: &Path) -> Result<()> {
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(&dir, e))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
                    self.files.insert(rel, sha256_hex(&bytes));
                }
            }
        }
        Ok(())
    }

    fn finish(mut self, root: &Path) -> Result<Self> {
        self.scan(root)?;
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        write(&root.join("manifest.json"), &(text + "\n"))?;
        Ok(self)
    }
}

fn write_runs(results: &[RunResult], out: &Path) -> Result<()> {
    for r in results {
        write(&out.join("histories").join(format!("{}.csv", file_stem(r))), &r.history.to_csv())?;
        if r.history.snapshots.len() > 1 {
            if let Ok(rows) = dynamics_csv(&r.history) {
                write(&out.join("dynamics").join(format!("{}.csv", file_stem(r))), &format_dynamics(&rows))?;
            }
        }
    }
    Ok(())
}

/// Generates the datasets (and teachers) of every setting and seed.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path, base: &Path) -> Result<Manifest> {
    if cfg.experiment == ExperimentKind::TheoryCheck {
        return Err(Error::config("experiment", "theory-check has no dataset to generate"));
    }
    echo_config(cfg, out)?;
    for setting in compare_settings(cfg) {
        for &seed in &cfg.seeds {
            let inst = build_instance(cfg, setting, seed, base)?;
            let dir = out
                .join(setting.label().replace(['=', '/'], "_"))
                .join(format!("seed{seed}"));
            let mut all = inst.train.clone();
            all = concat(&all, &inst.test)?;
            write_dataset_dir(&dir, &all, &format!("{} n_train={}", cfg.experiment.name(), inst.train.len()))?;
            if let Some(t) = &inst.teacher {
                t.save(&dir.join("teacher.json"))?;
            }
        }
    }
    Manifest::new(cfg).finish(out)
}

fn concat(a: &crate::data::Dataset, b: &crate::data::Dataset) -> Result<crate::data::Dataset> {
    let expectations = match (&a.expectations, &b.expectations) {
        (Some(x), Some(y)) => Some(crate::numerics::Matrix::vstack(&[x, y])?),
        _ => None,
    };
    crate::data::Dataset::new(
        a.nodes,
        crate::numerics::Matrix::vstack(&[&a.features, &b.features])?,
        crate::numerics::Matrix::vstack(&[&a.labels, &b.labels])?,
        expectations,
        a.graph.clone(),
    )
}

/// Trains the configured method on every setting and seed.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, base: &Path) -> Result<Vec<RunResult>> {
    let results = run_sweep(cfg, &compare_settings(cfg), &[cfg.train.method], base)?;
    echo_config(cfg, out)?;
    write_runs(&results, out)?;
    for r in &results {
        r.model.save(&out.join("models").join(format!("{}.json", file_stem(r))))?;
    }
    write(&out.join("summary.csv"), &summary_csv(&results))?;
    Manifest::new(cfg).finish(out)?;
    Ok(results)
}

/// SVI against SGD with shared data, initialisation and batches.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path, base: &Path) -> Result<Vec<RunResult>> {
    if cfg.experiment == ExperimentKind::TheoryCheck {
        return Err(Error::config("experiment", "use the theory-check command"));
    }
    let results = run_sweep(cfg, &compare_settings(cfg), &[Method::Sgd, Method::Svi], base)?;
    echo_config(cfg, out)?;
    write_runs(&results, out)?;
    write(&out.join("summary.csv"), &summary_csv(&results))?;
    Manifest::new(cfg).finish(out)?;
    Ok(results)
}

/// Graph model recovery with known and perturbed graphs over hidden widths.
pub fn cmd_recover(cfg: &ExperimentConfig, out: &Path, base: &Path) -> Result<Vec<RunResult>> {
    if cfg.experiment != ExperimentKind::GcnRecover {
        return Err(Error::config("experiment", "recover runs the gcn-recover experiment"));
    }
    let results = run_sweep(cfg, &recover_settings(cfg), &[Method::Sgd, Method::Svi], base)?;
    echo_config(cfg, out)?;
    write_runs(&results, out)?;
    write(&out.join("curves.csv"), &curves_csv(&results))?;
    write(&out.join("summary.csv"), &summary_csv(&results))?;
    Manifest::new(cfg).finish(out)?;
    Ok(results)
}

/// Lagged-feature panel classification with a correlation graph.
pub fn cmd_panel(cfg: &ExperimentConfig, out: &Path, base: &Path) -> Result<Vec<RunResult>> {
    if cfg.experiment != ExperimentKind::Panel {
        return Err(Error::config("experiment", "panel runs the panel experiment"));
    }
    cmd_compare(cfg, out, base)
}

/// Runs the configured theory checks (all when none are listed) and writes
/// `theory_report.json` and `theory_report.csv`.
pub fn cmd_theory_check(cfg: &ExperimentConfig, out: &Path) -> Result<TheoryReport> {
    let report = run_checks(&cfg.theory.checks)?;
    echo_config(cfg, out)?;
    write(&out.join("theory_report.json"), &(report.to_json() + "\n"))?;
    write(&out.join("theory_report.csv"), &report.to_csv())?;
    Manifest::new(cfg).finish(out)?;
    Ok(report)
}

/// Output directory: the explicit override, else the configured one
/// relative to `base`.
pub fn output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>, base: &Path) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| base.join(&cfg.output_dir))
}
