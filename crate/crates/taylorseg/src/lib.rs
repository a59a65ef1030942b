//! TaylorSeg: pretraining-free few-shot point cloud semantic segmentation.
//!
//! The crate provides the local structure fitting convolution (TaylorConv) in
//! its parameter-free (NN) and trainable (PN) forms, the U-shaped encoder and
//! decoder built from Taylor blocks, the adaptive push-pull prototype
//! alignment module, and a synthetic-scene harness with episodic training and
//! evaluation.
//!
//! All numerics are generic over the scalar type: use `f64` for gradient
//! checks and `f32` where speed matters.

pub mod autodiff;
pub mod encoding;
pub mod error;
pub mod fewshot;
pub mod geometry;
pub mod gradcheck;
pub mod harness;
pub mod optim;
pub mod scalar;
pub mod segnet;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete aliases for the two supported precisions.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type PointCloud32 = geometry::PointCloud<f32>;
pub type PointCloud64 = geometry::PointCloud<f64>;
