//! Dense linear algebra, activations, special functions and seeded streams.

mod activation;
mod eig;
mod matrix;
pub mod rng;
mod special;

pub use activation::{
    activation_derivative, activation_vjp, apply_activation, min_activation_derivative, sigmoid,
    ActivationKind,
};
pub(crate) use activation::softmax_vjp_from_output;
pub use eig::{spectral_norm, sym_eig, sym_eig_max, sym_eig_min, SymEigen};
pub use matrix::{matmul, Matrix};
pub(crate) use matrix::matmul_into;
pub use rng::{gaussian, gaussian_with, uniform_with, RngStream};
pub use special::{normal_cdf, normal_pdf};
