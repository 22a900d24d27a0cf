use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::LayerParams;
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamDomain {
    #[default]
    Unconstrained,
    /// Each layer's stacked (weight, bias) vector is kept within `radius`.
    EuclideanBall { radius: f64 },
}

impl ParamDomain {
    pub fn validate(self) -> Result<()> {
        match self {
            ParamDomain::EuclideanBall { radius } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")))
            }
            _ => Ok(()),
        }
    }

    pub fn project_layer(self, p: &mut LayerParams) {
        if let ParamDomain::EuclideanBall { radius } = self {
            let norm = p.norm();
            if norm > radius {
                *p = p.scale(radius / norm);
            }
        }
    }
}

pub fn project(params: &[LayerParams], domain: ParamDomain) -> Vec<LayerParams> {
    params
        .iter()
        .map(|p| {
            let mut q = p.clone();
            domain.project_layer(&mut q);
            q
        })
        .collect()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be non-negative, got {gamma}")))
    }
}

/// `Proj(θ − γF)`.
pub fn vi_step(params: &LayerParams, op: &LayerParams, gamma: f64, domain: ParamDomain) -> Result<LayerParams> {
    check_gamma(gamma)?;
    let mut out = params.clone();
    out.axpy(-gamma, op)?;
    domain.project_layer(&mut out);
    Ok(out)
}

/// How past operator values enter the update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Momentum {
    #[default]
    None,
    /// `v ← μv + F(θ)`, `θ ← Proj(θ − γv)`.
    HeavyBall { mu: f64 },
    /// As heavy ball, but `F` is evaluated at the lookahead `θ − γμv`.
    Nesterov { mu: f64 },
}

impl Momentum {
    pub fn from_parts(mu: f64, nesterov: bool) -> Self {
        match (mu, nesterov) {
            (m, _) if m == 0.0 => Momentum::None,
            (m, false) => Momentum::HeavyBall { mu: m },
            (m, true) => Momentum::Nesterov { mu: m },
        }
    }

    pub fn mu(self) -> f64 {
        match self {
            Momentum::None => 0.0,
            Momentum::HeavyBall { mu } | Momentum::Nesterov { mu } => mu,
        }
    }

    pub fn validate(self) -> Result<()> {
        let mu = self.mu();
        if (0.0..1.0).contains(&mu) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("momentum must be in [0,1), got {mu}")))
        }
    }

    /// Point at which the operator should be evaluated.
    pub fn lookahead(self, params: &LayerParams, velocity: &LayerParams, gamma: f64) -> Result<LayerParams> {
        let mut out = params.clone();
        if let Momentum::Nesterov { mu } = self {
            out.axpy(-gamma * mu, velocity)?;
        }
        Ok(out)
    }
}

/// Momentum form of [`vi_step`]; `velocity` is updated in place. With
/// `Momentum::None` this is exactly `vi_step`.
pub fn vi_step_with_momentum(
    params: &LayerParams,
    op: &LayerParams,
    gamma: f64,
    domain: ParamDomain,
    momentum: Momentum,
    velocity: &mut LayerParams,
) -> Result<LayerParams> {
    if momentum == Momentum::None {
        return vi_step(params, op, gamma, domain);
    }
    *velocity = velocity.scale(momentum.mu());
    velocity.axpy(1.0, op)?;
    vi_step(params, velocity, gamma, domain)
}

/// `γ_t = 1/(κ(t+1))`.
pub fn adaptive_step(kappa: f64, t: usize) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::ModulusTooSmall(kappa));
    }
    Ok(1.0 / (kappa * (t as f64 + 1.0)))
}

/// `Proj(θ_t − γ[F_t + λ(F_t − F_{t−1})])`.
pub fn oe_step(
    params: &LayerParams,
    prev_op: &LayerParams,
    op: &LayerParams,
    gamma: f64,
    lambda: f64,
    domain: ParamDomain,
) -> Result<LayerParams> {
    check_gamma(gamma)?;
    let mut dir = op.scale(1.0 + lambda);
    dir.axpy(-lambda, prev_op)?;
    let mut out = params.clone();
    out.axpy(-gamma, &dir)?;
    domain.project_layer(&mut out);
    Ok(out)
}

/// Draws `R` uniformly from `{2, …, t_max}`.
pub fn oe_select_index(t_max: usize, stream: RngStream) -> Result<usize> {
    if t_max < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 iterates, got {t_max}")));
    }
    Ok(stream.rng().random_range(2..=t_max))
}

/// Picks `Θ_R` from iterates `Θ_1 … Θ_T` stored in order (`history[0] = Θ_1`).
pub fn oe_select_iterate(history: &[LayerParams], stream: RngStream) -> Result<(usize, &LayerParams)> {
    let r = oe_select_index(history.len(), stream)?;
    Ok((r, &history[r - 1]))
}
