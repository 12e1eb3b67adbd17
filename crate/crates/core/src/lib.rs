//! Visual localization against 3D Gaussian Splatting scenes.
//!
//! Gaussians and query-image patches are encoded, aligned with attention,
//! matched coarse-to-fine, and the resulting 3D-2D correspondences are
//! solved with PnP + RANSAC and refined by render-and-match iterations.

pub mod alignment;
pub mod bench;
pub mod encoder2d;
pub mod encoder3d;
pub mod geometry;
pub mod imaging;
pub mod matching;
pub mod model;
pub mod network;
pub mod nn;
pub mod pnp;
pub mod refinement;
pub mod render;
pub mod scalar;
pub mod scene_io;
pub mod supervision;
pub mod tensor;

pub use scalar::Real;
pub use tensor::{ModelParams, Tensor, TensorError};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type ModelParams64 = ModelParams<f64>;
