//! Training graph neural networks by monotone variational inequalities.
//!
//! The crate is organised bottom-up: [`numerics`] and [`graph`] provide the
//! linear algebra and graph filters, [`network`] the layer stack with its
//! forward and backward passes, [`vi`] the operator estimates and projected
//! updates, and [`trainer`] the epoch loop shared by the VI and SGD routes.
//! [`data`], [`metrics`] and [`experiment`] drive the reproducible studies.

pub mod error;
pub mod graph;
pub mod network;
pub mod numerics;
pub mod vi;
pub mod metrics;
pub mod data;
pub mod trainer;
pub mod experiment;
pub mod theory;

pub use error::{Error, Result};
