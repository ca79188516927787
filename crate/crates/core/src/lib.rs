//! Continual learning for click-through-rate prediction on drifting streams.
//!
//! A base model is updated on each day as it arrives. A modular inference
//! head is retrained every day on a replay memory that drops partitions whose
//! models have fallen behind and exemplars of items no longer served. The
//! crate also ships a synthetic drifting stream generator, replay baselines
//! and evaluation helpers.

pub mod continual;
pub mod error;
pub mod eval;
pub mod memory;
pub mod models;
pub mod nn;
pub mod rng;
pub mod schema;
pub mod stream;

pub use continual::{run_continual, run_matrix, Ablations, RunResult, StrategyConfig, StrategyKind};
pub use error::{ColfError, Result};
pub use memory::{MemoryPolicyConfig, MemoryStore};
pub use models::{ModelSpec, TrainHyper};
pub use schema::{FeatureSchema, FieldKind, FieldSpec};
pub use stream::{generate_stream, ClickSample, DayPartition, DriftConfig, Stream};
