//! Permutation-equivariant learned precoding for multi-user MISO downlink.
//!
//! The crate bundles a small reverse-mode differentiation engine
//! ([`numkit`]), channel generators ([`channels`]), the spectral-efficiency
//! metric with classical baselines ([`precoding`]), permutation machinery
//! and equivariance checks ([`equivariance`]), the compared architectures
//! ([`models`]) and the training / evaluation harness ([`harness`]).
//!
//! Everything numeric is generic over [`Scalar`]; the `*F64` aliases below
//! fix the scalar to `f64`, which is what the harness and CLI use.

pub mod channels;
pub mod equivariance;
pub mod error;
pub mod harness;
pub mod models;
pub mod numkit;
pub mod precoding;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TensorF64 = numkit::Tensor<f64>;
pub type ComplexMatrixF64 = numkit::ComplexMatrix<f64>;
pub type AdamStateF64 = numkit::AdamState<f64>;
pub type ModelF64 = models::Model<f64>;
pub type ChannelSampleF64 = channels::ChannelSample<f64>;
pub type DatasetF64 = channels::Dataset<f64>;
