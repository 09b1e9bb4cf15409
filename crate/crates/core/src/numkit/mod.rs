//! Dense real tensors, reverse-mode differentiation, complex matrices and Adam.
//!
//! Network computation runs on real-stacked `[Re, Im]` representations;
//! [`ComplexMatrix`] is used by channel, metric and baseline code.

mod adam;
mod complex;
mod eigen;
pub mod gemm;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use complex::{inner, ComplexMatrix};
pub use eigen::sym_eigen;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
