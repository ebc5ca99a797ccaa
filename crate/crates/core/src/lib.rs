//! Learned super-resolution of coarse lattice simulations onto a detailed
//! surface mesh, together with the interpolation baselines, a synthetic data
//! generator and evaluation utilities.

// Negated comparisons are how validation rejects NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod geodesy;
mod kv;
pub mod mesh;
pub mod network;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Tensor in the precision used for training.
pub type Tensor32 = tensor::Tensor<f32>;
/// Tensor in the precision used for gradient checks.
pub type Tensor64 = tensor::Tensor<f64>;

/// Model in the precision used for training.
pub type Model32 = network::Model<f32>;
/// Model in the precision used for gradient checks.
pub type Model64 = network::Model<f64>;
/// Surface geometry matching [`Model32`].
pub type Geometry32 = network::Geometry<f32>;
/// Surface geometry matching [`Model64`].
pub type Geometry64 = network::Geometry<f64>;
