//! Reverse-mode automatic differentiation on `f64` ndarrays, sized for
//! desk-scale models: dense layers, 2-D/3-D convolutions (plain, transposed,
//! and shared filter banks), normalization, attention-friendly primitives,
//! embeddings, and an Adam optimizer.
//!
//! Everything is deterministic: parameters live in a [`ParamStore`] with
//! stable ordering, a [`Graph`] is a flat tape evaluated eagerly, and
//! `backward` walks the tape in reverse creation order. No threading happens
//! inside ops; callers parallelize across independent graphs.

pub mod graph;
pub mod init;
pub mod layers;
pub mod optim;
pub mod store;

pub use graph::{Graph, Var};
pub use optim::Adam;
pub use store::{Grads, ParamId, ParamStore};

/// Dynamic-dimensional f64 array, the engine's only tensor type.
pub type Arr = ndarray::ArrayD<f64>;
