//! Metrics and result aggregation.

mod metrics;
mod report;

pub use metrics::{auc, kl_divergence, logloss, mean_std, relative_gain};
pub use report::{aggregate, DailyStat, SummaryRow, SummaryTable};
