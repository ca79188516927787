//! Minimal neural-network engine: embedding lookup, dense layers, sigmoid
//! output, clipped cross-entropy, manual backpropagation and SGD/Adam.

mod dense;
mod embedding;
mod network;
mod optim;
mod params;

pub use dense::{sigmoid, Activation, DenseLayer, DenseStack};
pub use embedding::EmbeddingTable;
pub use network::{clipped_bce, logloss, Gradients, LayerGrad, Lookup, Network, RowGrads, SoftTargets, EPS_CLIP};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{init_params, ModelKind, ModelParams, DEFAULT_INIT_SCALE};
