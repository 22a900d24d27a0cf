use serde::{Deserialize, Serialize};

use super::special::{normal_cdf, normal_pdf};
use super::Matrix;
use crate::error::{Error, Result};

/// Activation applied after a layer's (optionally normalized) preactivation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    Relu,
    Sigmoid,
    /// Row-wise normalized exponentials.
    Softmax,
    /// `ln(1 + exp(beta z)) / beta`.
    Softplus { beta: f64 },
    /// Standard normal CDF (probit link).
    NormalCdf,
}

impl ActivationKind {
    pub fn validate(self) -> Result<()> {
        match self {
            ActivationKind::Softplus { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                Error::InvalidArgument(format!("softplus beta must be positive, got {beta}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_pointwise(self) -> bool {
        !matches!(self, ActivationKind::Softmax)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Softmax => "softmax",
            ActivationKind::Softplus { .. } => "softplus",
            ActivationKind::NormalCdf => "normal_cdf",
        }
    }

    /// Global Lipschitz constant of the activation map.
    pub fn lipschitz(self) -> f64 {
        match self {
            ActivationKind::Sigmoid => 0.25,
            ActivationKind::NormalCdf => 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            // softplus' = sigmoid(beta z) < 1 for every beta
            ActivationKind::Softplus { .. } => 1.0,
            ActivationKind::Softmax | ActivationKind::Identity | ActivationKind::Relu => 1.0,
        }
    }

    /// True when the derivative is bounded away from zero on compact sets, so
    /// the last-layer operator can be strongly monotone.
    pub fn strongly_monotone_capable(self) -> bool {
        matches!(
            self,
            ActivationKind::Sigmoid | ActivationKind::NormalCdf | ActivationKind::Softplus { .. }
        )
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(beta: f64, z: f64) -> f64 {
    let bz = beta * z;
    (bz.max(0.0) + (-bz.abs()).exp().ln_1p()) / beta
}

/// Pointwise derivative; `None` for softmax.
#[inline]
fn pointwise_derivative(kind: ActivationKind, z: f64) -> Option<f64> {
    Some(match kind {
        ActivationKind::Identity => 1.0,
        // subgradient at 0 fixed to 0
        ActivationKind::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::Sigmoid => {
            let s = sigmoid(z);
            s * (1.0 - s)
        }
        ActivationKind::Softplus { beta } => sigmoid(beta * z),
        ActivationKind::NormalCdf => normal_pdf(z),
        ActivationKind::Softmax => return None,
    })
}

pub fn apply_activation(kind: ActivationKind, z: &Matrix) -> Result<Matrix> {
    kind.validate()?;
    Ok(match kind {
        ActivationKind::Identity => z.clone(),
        ActivationKind::Relu => z.map(|v| v.max(0.0)),
        ActivationKind::Sigmoid => z.map(sigmoid),
        ActivationKind::Softplus { beta } => z.map(|v| softplus(beta, v)),
        ActivationKind::NormalCdf => z.map(normal_cdf),
        ActivationKind::Softmax => {
            if z.cols() < 2 {
                return Err(Error::shape("softmax", "needs at least 2 columns"));
            }
            let mut out = z.clone();
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            out
        }
    })
}

/// Vector-Jacobian product of the activation at `z` against `upstream`.
pub fn activation_vjp(kind: ActivationKind, z: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    if z.shape() != upstream.shape() {
        return Err(Error::shape(
            "activation_vjp",
            format!("{:?} vs {:?}", z.shape(), upstream.shape()),
        ));
    }
    if kind == ActivationKind::Softmax {
        let p = apply_activation(kind, z)?;
        return softmax_vjp_from_output(&p, upstream);
    }
    kind.validate()?;
    z.zip_with(upstream, "activation_vjp", |zi, ui| {
        ui * pointwise_derivative(kind, zi).expect("pointwise")
    })
}

/// Softmax VJP given the softmax output `p`: `(diag(p) - p pᵀ) u` per row.
pub(crate) fn softmax_vjp_from_output(p: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    if p.shape() != upstream.shape() {
        return Err(Error::shape("softmax_vjp", "shape mismatch"));
    }
    let mut out = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let pr = p.row(i);
        let ur = upstream.row(i);
        let inner: f64 = pr.iter().zip(ur).map(|(a, b)| a * b).sum();
        for (o, (pv, uv)) in out.row_mut(i).iter_mut().zip(pr.iter().zip(ur)) {
            *o = pv * (uv - inner);
        }
    }
    Ok(out)
}

/// Elementwise derivative matrix for pointwise activations.
pub fn activation_derivative(kind: ActivationKind, z: &Matrix) -> Result<Matrix> {
    if !kind.is_pointwise() {
        return Err(Error::InvalidArgument(
            "softmax has no elementwise derivative".into(),
        ));
    }
    kind.validate()?;
    Ok(z.map(|v| pointwise_derivative(kind, v).expect("pointwise")))
}

/// Smallest eigenvalue of the activation Jacobian over the entries of `z`.
///
/// Pointwise activations have diagonal Jacobians, so this is the smallest
/// entrywise derivative. Softmax Jacobians annihilate the ones vector, so the
/// bound is exactly zero. ReLU and identity are signaled distinctly because
/// their bounds are degenerate (a kink, or linear with no saturation).
pub fn min_activation_derivative(kind: ActivationKind, z: &Matrix) -> Result<f64> {
    match kind {
        ActivationKind::Softmax => Ok(0.0),
        ActivationKind::Relu => Err(Error::DerivativeBoundUnavailable("relu")),
        ActivationKind::Identity => Err(Error::DerivativeBoundUnavailable("identity")),
        _ => {
            kind.validate()?;
            Ok(z
                .as_slice()
                .iter()
                .map(|&v| pointwise_derivative(kind, v).expect("pointwise"))
                .fold(f64::INFINITY, f64::min))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{gaussian, RngStream};

    fn fd_vjp(kind: ActivationKind, z: &Matrix, u: &Matrix, h: f64) -> Matrix {
        // d/dz_ij of <u, phi(z)>
        let mut out = Matrix::zeros(z.rows(), z.cols());
        for i in 0..z.rows() {
            for j in 0..z.cols() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[(i, j)] += h;
                zm[(i, j)] -= h;
                let fp = apply_activation(kind, &zp).unwrap().dot(u).unwrap();
                let fm = apply_activation(kind, &zm).unwrap().dot(u).unwrap();
                out[(i, j)] = (fp - fm) / (2.0 * h);
            }
        }
        out
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-12)
    }

    #[test]
    fn symmetric_points() {
        let z = Matrix::zeros(1, 1);
        assert_eq!(apply_activation(ActivationKind::Sigmoid, &z).unwrap()[(0, 0)], 0.5);
        assert_eq!(apply_activation(ActivationKind::NormalCdf, &z).unwrap()[(0, 0)], 0.5);
        let s = apply_activation(ActivationKind::Softmax, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn relu_gating() {
        let z = Matrix::row_vector(&[-1.0, 2.0]);
        let u = Matrix::row_vector(&[1.0, 1.0]);
        let g = activation_vjp(ActivationKind::Relu, &z, &u).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 1.0]);
        let at_zero = activation_vjp(ActivationKind::Relu, &Matrix::zeros(1, 1), &Matrix::filled(1, 1, 1.0)).unwrap();
        assert_eq!(at_zero[(0, 0)], 0.0);
    }

    #[test]
    fn softmax_vjp_kills_ones() {
        let z = Matrix::row_vector(&[0.0, 0.0]);
        let u = Matrix::row_vector(&[1.0, 1.0]);
        let g = activation_vjp(ActivationKind::Softmax, &z, &u).unwrap();
        assert!(g.max_abs() < 1e-15);
    }

    #[test]
    fn softplus_matches_finite_differences() {
        let kind = ActivationKind::Softplus { beta: 5.0 };
        let z = gaussian(RngStream::new(1, 0), 0.0, 1.0, 4, 3);
        let u = gaussian(RngStream::new(1, 1), 0.0, 1.0, 4, 3);
        let g = activation_vjp(kind, &z, &u).unwrap();
        assert!(rel_err(&g, &fd_vjp(kind, &z, &u, 1e-5)) < 1e-6);
    }

    #[test]
    fn vjp_matches_finite_differences_at_random_points() {
        let kinds = [
            ActivationKind::Sigmoid,
            ActivationKind::Softplus { beta: 2.0 },
            ActivationKind::NormalCdf,
            ActivationKind::Softmax,
        ];
        for (k, kind) in kinds.into_iter().enumerate() {
            for trial in 0..100u64 {
                let z = gaussian(RngStream::new(trial, k as u64), 0.0, 2.0, 1, 3);
                let u = gaussian(RngStream::new(trial, 10 + k as u64), 0.0, 1.0, 1, 3);
                let g = activation_vjp(kind, &z, &u).unwrap();
                let fd = fd_vjp(kind, &z, &u, 1e-5);
                let err = g.sub(&fd).unwrap().frobenius_norm();
                assert!(err <= 1e-5 * fd.frobenius_norm().max(1e-3), "{kind:?} trial {trial}: {err}");
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = gaussian(RngStream::new(2, 2), 0.0, 50.0, 20, 4);
        let p = apply_activation(ActivationKind::Softmax, &z).unwrap();
        for i in 0..p.rows() {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(apply_activation(ActivationKind::Softmax, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn derivative_bounds() {
        let sig = ActivationKind::Sigmoid;
        assert_eq!(min_activation_derivative(sig, &Matrix::zeros(1, 1)).unwrap(), 0.25);
        let s4 = 1.0 / (1.0 + (-4.0f64).exp());
        let got = min_activation_derivative(sig, &Matrix::row_vector(&[0.0, 4.0])).unwrap();
        assert!((got - s4 * (1.0 - s4)).abs() < 1e-15);
        assert!((got - 0.017663).abs() < 1e-6);
        let z = gaussian(RngStream::new(3, 3), 0.0, 1.0, 3, 3);
        assert_eq!(min_activation_derivative(ActivationKind::Softmax, &z).unwrap(), 0.0);
        assert!(matches!(
            min_activation_derivative(ActivationKind::Relu, &z),
            Err(Error::DerivativeBoundUnavailable("relu"))
        ));
        assert!(matches!(
            min_activation_derivative(ActivationKind::Identity, &z),
            Err(Error::DerivativeBoundUnavailable(_))
        ));
    }

    #[test]
    fn softplus_beta_must_be_positive() {
        let z = Matrix::zeros(1, 1);
        assert!(apply_activation(ActivationKind::Softplus { beta: 0.0 }, &z).is_err());
    }
}
