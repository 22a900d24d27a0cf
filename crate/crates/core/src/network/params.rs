use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Weight (`expanded_in × out`) and optional bias (`1 × out`) of one layer.
/// Also used for anything shaped like the parameters: gradients, operator
/// values and velocities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Matrix,
    pub bias: Option<Matrix>,
}

impl LayerParams {
    pub fn new(weight: Matrix, bias: Option<Matrix>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.shape() != (1, weight.cols()) {
                return Err(Error::shape(
                    "LayerParams::new",
                    format!("bias {:?} for weight {:?}", b.shape(), weight.shape()),
                ));
            }
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: self.bias.as_ref().map(|b| Matrix::zeros(1, b.cols())),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.weight.shape() == other.weight.shape()
            && self.bias.as_ref().map(Matrix::shape) == other.bias.as_ref().map(Matrix::shape)
    }

    fn check(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(op, "parameter shapes differ"))
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check(other, "LayerParams::axpy")?;
        self.weight.axpy(alpha, &other.weight)?;
        if let (Some(b), Some(o)) = (self.bias.as_mut(), other.bias.as_ref()) {
            b.axpy(alpha, o)?;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            weight: self.weight.scale(s),
            bias: self.bias.as_ref().map(|b| b.scale(s)),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check(other, "LayerParams::dot")?;
        let mut total = self.weight.dot(&other.weight)?;
        if let (Some(b), Some(o)) = (&self.bias, &other.bias) {
            total += b.dot(o)?;
        }
        Ok(total)
    }

    /// Squared Euclidean norm of the stacked (weight, bias) vector.
    pub fn norm_sq(&self) -> f64 {
        let w = self.weight.frobenius_norm();
        let b = self.bias.as_ref().map_or(0.0, Matrix::frobenius_norm);
        w * w + b * b
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.as_ref().is_none_or(Matrix::is_finite)
    }

    /// Multiplies every output column (weight column and bias entry) by `s[j]`.
    pub fn scale_columns(&mut self, s: &[f64]) {
        for i in 0..self.weight.rows() {
            for (v, f) in self.weight.row_mut(i).iter_mut().zip(s) {
                *v *= f;
            }
        }
        if let Some(b) = self.bias.as_mut() {
            for (v, f) in b.row_mut(0).iter_mut().zip(s) {
                *v *= f;
            }
        }
    }
}

/// `Σ_l ‖a_l − b_l‖²` over whole parameter lists.
pub fn params_distance_sq(a: &[LayerParams], b: &[LayerParams]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("params_distance_sq", "layer counts differ"));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| Ok(x.sub(y)?.norm_sq()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = LayerParams::new(Matrix::from_rows(&[&[1.0, 2.0]]), Some(Matrix::row_vector(&[3.0, 4.0]))).unwrap();
        assert_eq!(a.norm_sq(), 30.0);
        let mut b = a.zeros_like();
        b.axpy(2.0, &a).unwrap();
        assert_eq!(b.dot(&a).unwrap(), 60.0);
        assert_eq!(params_distance_sq(std::slice::from_ref(&a), &[b]).unwrap(), 30.0);
        let mut c = a.clone();
        c.scale_columns(&[2.0, 0.5]);
        assert_eq!(c.weight.as_slice(), &[2.0, 1.0]);
        assert_eq!(c.bias.unwrap().as_slice(), &[6.0, 2.0]);
        assert!(LayerParams::new(Matrix::zeros(2, 2), Some(Matrix::zeros(1, 3))).is_err());
    }
}
