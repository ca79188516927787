use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ColfError, Result};
use crate::eval::{auc, logloss};
use crate::memory::UpdateReport;
use crate::stream::{generate_stream, DriftConfig, Stream};

use super::config::{StrategyConfig, StrategyKind};
use super::learners::build_learner;

/// One scored day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRow {
    pub day: u32,
    pub auc: f64,
    pub logloss: f64,
    /// Replay memory size after the day was observed.
    pub memory_size: usize,
    /// Last day seen by the model that produced the predictions.
    pub model_day: u32,
    /// Wall-clock seconds spent observing the day.
    pub train_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: String,
    pub kind: StrategyKind,
    pub seed: u64,
    pub rows: Vec<DayRow>,
    pub memory_log: Vec<UpdateReport>,
    /// AUC over all scored days' predictions pooled together.
    pub pooled_auc: f64,
}

impl RunResult {
    /// Equality on everything except timings.
    pub fn same_outcome(&self, other: &RunResult) -> bool {
        let strip = |r: &RunResult| {
            r.rows
                .iter()
                .map(|d| (d.day, d.auc.to_bits(), d.logloss.to_bits(), d.memory_size, d.model_day))
                .collect::<Vec<_>>()
        };
        self.strategy == other.strategy
            && self.kind == other.kind
            && self.seed == other.seed
            && strip(self) == strip(other)
            && self.memory_log == other.memory_log
            && self.pooled_auc.to_bits() == other.pooled_auc.to_bits()
    }

    pub fn mean_auc(&self) -> f64 {
        self.rows.iter().map(|r| r.auc).sum::<f64>() / self.rows.len() as f64
    }
}

/// Runs a strategy over the whole stream: each day is first predicted by
/// the model trained through the previous day and then observed. The first
/// day is warm-up only.
pub fn run_continual(stream: &Stream, strategy: &StrategyConfig) -> Result<RunResult> {
    strategy.validate()?;
    if stream.n_days() < 2 {
        return Err(ColfError::InvalidInput(format!(
            "need at least 2 days, stream has {}",
            stream.n_days()
        )));
    }
    let mut learner = build_learner(strategy, &stream.schema)?;
    let mut rows = Vec::with_capacity(stream.n_days() - 1);
    let mut memory_log = Vec::new();
    let mut all_preds = Vec::new();
    let mut all_labels = Vec::new();

    for data in &stream.days {
        let preds = learner.predict(data)?;
        let model_day = learner.trained_through();
        if let Some(seen) = model_day {
            if seen >= data.day {
                return Err(ColfError::InvalidState(format!(
                    "model trained through day {seen} asked to predict day {}",
                    data.day
                )));
            }
        }
        let started = Instant::now();
        if let Some(report) = learner.observe(data)? {
            memory_log.push(report);
        }
        let train_seconds = started.elapsed().as_secs_f64();
        if let (Some(preds), Some(model_day)) = (preds, model_day) {
            let labels = data.labels();
            rows.push(DayRow {
                day: data.day,
                auc: auc(&preds, &labels)?,
                logloss: logloss(&preds, &labels)?,
                memory_size: learner.memory_size(),
                model_day,
                train_seconds,
            });
            all_preds.extend(preds);
            all_labels.extend(labels);
        }
    }
    Ok(RunResult {
        strategy: strategy.label(),
        kind: strategy.kind,
        seed: strategy.seed,
        rows,
        memory_log,
        pooled_auc: auc(&all_preds, &all_labels)?,
    })
}

/// Every strategy on every seed. Seed `s` drives both the stream and the
/// strategy; each seed's stream is generated once and shared. Results come
/// back strategy-major, seeds in the given order, whatever `jobs` is.
pub fn run_matrix(
    stream_config: &DriftConfig,
    strategies: &[StrategyConfig],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<RunResult>> {
    for s in strategies {
        s.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ColfError::InvalidState(e.to_string()))?;
    pool.install(|| {
        let streams: Vec<Stream> = seeds
            .par_iter()
            .map(|&seed| {
                let cfg = DriftConfig {
                    seed,
                    ..stream_config.clone()
                };
                generate_stream(&cfg).map(|g| g.stream)
            })
            .collect::<Result<_>>()?;
        let cells: Vec<(usize, usize)> = (0..strategies.len())
            .flat_map(|i| (0..seeds.len()).map(move |j| (i, j)))
            .collect();
        cells
            .par_iter()
            .map(|&(i, j)| run_continual(&streams[j], &strategies[i].clone().with_seed(seeds[j])))
            .collect()
    })
}
