//! Precoding architectures on a shared tape: edge GNNs, transformers, a GAT
//! and graph transformers for baseband and hybrid precoding.

mod checkpoint;
mod dense;
mod gformer;
mod gnn;
mod model;
mod ops;
mod spec;

pub use checkpoint::{decode_model, encode_model, load_model, save_model, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use model::{Bound, Model, Param, Precoded, RawOutput};
pub use ops::{attend, positional_code};
pub use spec::{Arch, Axis, ModelSpec};
