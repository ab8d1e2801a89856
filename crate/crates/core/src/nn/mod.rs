//! Minimal reverse-mode autodiff engine, MLP construction, first-order
//! optimizers, and flat parameter I/O. Everything downstream trains
//! through this module.
//!
//! A [`Graph`] instance is single-threaded; independent instances can be
//! driven from different threads. There is no shared mutable global state.

pub mod graph;
pub mod io;
pub mod mlp;
pub mod optim;
pub mod tensor;

pub use graph::{Gradients, Graph, GroupId, NodeId};
pub use io::{bundle, load_params, save_params, unbundle};
pub use mlp::{snapshot, Activation, BoundMlp, Mlp, NetSnapshot, ParamLayout, ParamSegment, ParamVector};
pub use optim::{OptimSpec, Optimizer, OptimizerKind};
pub use tensor::Tensor;
