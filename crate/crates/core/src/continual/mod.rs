//! Day-by-day continual training: the full method, its ablations and the
//! baselines, plus the run loop that scores each day before training on it.

mod config;
mod learners;
mod pools;
mod runner;

pub use config::{Ablations, StrategyConfig, StrategyKind};
pub use learners::{build_learner, ColfLearner, IncrementalLearner, Learner, ReplayLearner, StepOutcome};
pub use pools::{ader_freq_update, cbrs_update, AderPool, CbrsPool};
pub use runner::{run_continual, run_matrix, DayRow, RunResult};
