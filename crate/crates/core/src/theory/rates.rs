//! Convergence-rate experiments: error against horizon `T` on log-log axes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gen_gcn_teacher, teacher_dataset};
use crate::error::Result;
use crate::graph::erdos_renyi;
use crate::network::{init_params, params_distance_sq, FilterKind, InitScheme, LayerSpec, Mode, Network};
use crate::numerics::rng::streams;
use crate::numerics::{ActivationKind, RngStream};
use crate::trainer::{train, Method, StepRule, TrainConfig};
use crate::vi::{estimate_modulus, last_layer_operator, oe_select_index, oe_step, ParamDomain};

use super::{CheckResult, Tolerance};

pub const ADAPTIVE_RATE_HORIZONS: [usize; 3] = [100, 1_000, 10_000];
pub const OE_RATE_HORIZONS: [usize; 3] = [100, 1_000, 10_000];
const RATE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Step `t` of the extrapolation run draws `⌈t / OE_BATCH_DIVISOR⌉` fresh
/// samples, so the operator noise shrinks like `t^{-1/2}`.
pub const OE_BATCH_DIVISOR: usize = 64;

/// Ball radius of the strongly monotone run.
const BALL_RADIUS: f64 = 10.0;

/// Per horizon, one error value per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub horizons: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl RateCurve {
    pub fn medians(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| {
                let mut s = v.clone();
                s.sort_by(f64::total_cmp);
                let m = s.len() / 2;
                if s.len() % 2 == 1 {
                    s[m]
                } else {
                    0.5 * (s[m - 1] + s[m])
                }
            })
            .collect()
    }

    /// Least-squares slope of `ln median` on `ln T`.
    pub fn slope(&self) -> f64 {
        let xs: Vec<f64> = self.horizons.iter().map(|&t| t as f64).collect();
        loglog_slope(&xs, &self.medians())
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn run_grid(horizons: &[usize], seeds: &[u64], job: impl Fn(usize, u64) -> Result<f64> + Sync) -> Result<RateCurve> {
    let jobs: Vec<(usize, u64)> = horizons
        .iter()
        .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let flat = jobs
        .par_iter()
        .map(|&(t, s)| job(t, s))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RateCurve {
        horizons: horizons.to_vec(),
        values: flat.chunks(seeds.len()).map(<[f64]>::to_vec).collect(),
    })
}

/// `‖Θ_T − Θ*‖²` of streaming SVI with steps `1/(κ̂(t+1))` on a one-layer
/// GCN-sigmoid teacher (15 nodes, 2 channels), one sample per step, inside a
/// ball of radius 10.
pub fn adaptive_rate_curve(horizons: &[usize], seeds: &[u64]) -> Result<RateCurve> {
    let g = erdos_renyi(15, 0.15, RngStream::new(0, streams::GRAPH))?;
    let spec = vec![LayerSpec::new(FilterKind::Gcn, ActivationKind::Sigmoid, 2, 1)];
    let (_, teacher) = gen_gcn_teacher(&g, 1, spec.clone(), 0, 0)?;
    run_grid(horizons, seeds, |t, seed| {
        let data = teacher_dataset(&teacher, t, 100 + seed)?;
        let student = init_params(
            spec.clone(),
            Some(g.clone()),
            15,
            InitScheme::Glorot,
            RngStream::new(seed, streams::INIT),
        )?;
        let cfg = TrainConfig {
            method: Method::Svi,
            epochs: 1,
            batch_size: 1,
            step: StepRule::AdaptiveKappa,
            domain: ParamDomain::EuclideanBall { radius: BALL_RADIUS },
            seed,
            snapshot_every: 0,
            ..TrainConfig::default()
        };
        let (net, _) = train(student, &data, None, &cfg)?;
        params_distance_sq(net.params(), teacher.params())
    })
}

/// `‖F(Θ_R)‖` of operator extrapolation (`λ = 1`, `γ = 1/(4K̂₂)`) on a dense
/// softmax teacher (2 features, 3 classes), with `R` uniform on `{2..T}`.
/// `F` is evaluated on 20000 held-out samples labelled with their conditional
/// expectations, so it vanishes exactly at the teacher. Iterates after `R`
/// are never used, so each run stops there.
pub fn oe_rate_curve(horizons: &[usize], seeds: &[u64]) -> Result<RateCurve> {
    let spec = vec![LayerSpec::new(FilterKind::Dense, ActivationKind::Softmax, 2, 3)];
    let teacher = init_params(spec.clone(), None, 1, InitScheme::Teacher, RngStream::new(0, streams::TEACHER))?;
    let eval = teacher_dataset(&teacher, 20_000, 999)?;
    let truth = eval.expectations.clone().expect("teacher data");
    let residual_norm = |net: &Network| -> Result<f64> {
        let (_, trace) = net.forward(&eval.features, Mode::Eval)?;
        Ok(last_layer_operator(net, &trace, &truth)?.value.norm())
    };
    run_grid(horizons, seeds, |t_max, seed| {
        let mut net = init_params(spec.clone(), None, 1, InitScheme::Glorot, RngStream::new(seed, streams::INIT))?;
        let lipschitz = estimate_modulus(&net, &eval.features, Mode::Eval)?.lipschitz;
        let gamma = 1.0 / (4.0 * lipschitz);
        let r = oe_select_index(t_max, RngStream::new(seed, streams::SELECT))?;
        let mut prev = None;
        // iterate t+1 is produced by step t; the run starts at Θ_1
        for t in 1..r {
            let batch = teacher_dataset(&teacher, t.div_ceil(OE_BATCH_DIVISOR), (seed << 32) | t as u64)?;
            let (_, trace) = net.forward(&batch.features, Mode::Train)?;
            let op = last_layer_operator(&net, &trace, &batch.labels)?.value;
            let last = prev.take().unwrap_or_else(|| op.clone());
            let next = oe_step(&net.params()[0], &last, &op, gamma, 1.0, ParamDomain::Unconstrained)?;
            net.set_params(vec![next])?;
            prev = Some(op);
        }
        residual_norm(&net)
    })
}

pub(super) fn adaptive_rate_check() -> Result<CheckResult> {
    let curve = adaptive_rate_curve(&ADAPTIVE_RATE_HORIZONS, &RATE_SEEDS)?;
    Ok(CheckResult::new(
        "adaptive_rate",
        "log-log slope of median ‖Θ_T − Θ*‖² under adaptive steps",
        Tolerance::Within { low: -1.3, high: -0.7 },
        curve.slope(),
        RATE_SEEDS.len(),
    )
    .with_note(format!("medians {:?} at T = {:?}", curve.medians(), curve.horizons)))
}

pub(super) fn oe_rate_check() -> Result<CheckResult> {
    let curve = oe_rate_curve(&OE_RATE_HORIZONS, &RATE_SEEDS)?;
    Ok(CheckResult::new(
        "oe_rate",
        "log-log slope of median ‖F(Θ_R)‖ under operator extrapolation",
        Tolerance::Within { low: -0.75, high: -0.3 },
        curve.slope(),
        RATE_SEEDS.len(),
    )
    .with_note(format!("medians {:?} at T = {:?}", curve.medians(), curve.horizons)))
}
