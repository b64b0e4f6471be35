//! Prior-guided face super-resolution: 16x16 to 128x128 with a lightweight
//! U-Net whose reconstruction loss is reweighted by detector-derived
//! importance heatmaps.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for everyday use.

pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod features;
pub mod heatmap;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod resample;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod weights;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Grid32 = tensor::Grid<f32>;
pub type Grid64 = tensor::Grid<f64>;
pub type UNet32 = model::UNet<f32>;
pub type UNet64 = model::UNet<f64>;
pub type FeatureExtractor32 = features::FeatureExtractor<f32>;
pub type FeatureExtractor64 = features::FeatureExtractor<f64>;
pub type ImportanceMap32 = heatmap::ImportanceMap<f32>;
pub type ImportanceMap64 = heatmap::ImportanceMap<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
