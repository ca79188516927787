use std::collections::{BTreeMap, BTreeSet};

use crate::error::{ColfError, Result};
use crate::memory::{score_partitions, update, MemoryDelta, MemoryStore, UpdateReport, UpdateSteps};
use crate::models::{
    predict, register_new_ids, spawn_head, train_full_on_memory, train_head_joint_on_memory, train_head_on_memory,
    train_head_on_samples,
    update_base, ModelSnapshot, ModularPair,
};
use crate::nn::ModelParams;
use crate::schema::FeatureSchema;
use crate::stream::{ClickSample, DayPartition};

use super::config::{StrategyConfig, StrategyKind};
use super::pools::{AderPool, CbrsPool};

const SALT_BASE: u64 = 0;
const SALT_HEAD: u64 = 1;

fn salt(day: u32, phase: u64) -> u64 {
    (day as u64) << 2 | phase
}

/// A continual learner: predicts a day, then observes it.
pub trait Learner: Send {
    /// Predictions of the current inference model, or `None` before the
    /// first observed day.
    fn predict(&self, data: &DayPartition) -> Result<Option<Vec<f64>>>;

    /// Consumes a day of labeled data. Memory-based learners return the
    /// memory log entry for the day.
    fn observe(&mut self, data: &DayPartition) -> Result<Option<UpdateReport>>;

    fn memory_size(&self) -> usize;

    /// Last day the inference model has seen.
    fn trained_through(&self) -> Option<u32>;
}

fn check_next_day(last: Option<u32>, day: u32) -> Result<()> {
    match last {
        Some(prev) if day != prev + 1 => Err(ColfError::InvalidState(format!(
            "expected day {} next, got day {day}",
            prev + 1
        ))),
        _ => Ok(()),
    }
}

/// Result of one full-method step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub report: UpdateReport,
    pub delta: MemoryDelta,
    /// Snapshot scores on the day (empty on the first day or when old-memory
    /// discarding is off).
    pub scores: BTreeMap<u32, f64>,
}

/// State of the full method between days.
#[derive(Debug, Clone)]
pub struct ColfLearner {
    config: StrategyConfig,
    base: ModelParams,
    inference: Option<ModularPair>,
    memory: MemoryStore,
    snapshots: BTreeMap<u32, ModelSnapshot>,
    last_day: Option<u32>,
}

impl ColfLearner {
    pub fn new(config: StrategyConfig, data_schema: &FeatureSchema) -> Result<Self> {
        config.validate()?;
        if config.kind != StrategyKind::Colf {
            return Err(ColfError::InvalidConfig(format!(
                "ColfLearner needs kind colf, got {}",
                config.kind
            )));
        }
        let base = config.model.build(data_schema, config.seed)?;
        Ok(Self {
            config,
            base,
            inference: None,
            memory: MemoryStore::new(),
            snapshots: BTreeMap::new(),
            last_day: None,
        })
    }

    pub fn base(&self) -> &ModelParams {
        &self.base
    }

    pub fn inference(&self) -> Option<&ModularPair> {
        self.inference.as_ref()
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn snapshot_days(&self) -> Vec<u32> {
        self.snapshots.keys().copied().collect()
    }

    /// One day: score retained snapshots, update the base model, update the
    /// memory, then train a fresh head on it.
    pub fn step(&mut self, data: &DayPartition) -> Result<StepOutcome> {
        check_next_day(self.last_day, data.day)?;
        if data.is_empty() {
            return Err(ColfError::InvalidInput(format!("day {} has no samples", data.day)));
        }
        let ablations = self.config.ablations;
        let policy = &self.config.policy;
        let t = data.day;

        let discard = !ablations.no_old_discard;
        let (scores, score_latest) = match self.last_day {
            Some(prev) if discard && !self.memory.is_empty() => {
                let mut days: BTreeSet<u32> = self.memory.days().into_iter().collect();
                days.insert(prev);
                let scores = score_partitions(&self.snapshots, &days, data, policy.criterion)?;
                let latest = scores[&prev];
                (scores, latest)
            }
            _ => (BTreeMap::new(), f64::NAN),
        };

        let base_hyper = self.config.base_hyper();
        let id_seed = self.base.id_seed;
        register_new_ids(&mut self.base, &data.samples, id_seed);
        update_base(&mut self.base, data, &base_hyper, salt(t, SALT_BASE))?;

        let steps = UpdateSteps {
            discard_old: discard && !scores.is_empty(),
            refresh_relevant: !ablations.no_relevant,
            append_new: !ablations.no_new,
        };
        let cap_seed = self.config.seed;
        let (mut report, delta) = update(&mut self.memory, &scores, score_latest, data, policy, steps, cap_seed)?;

        let head_hyper = self.config.head_hyper();
        let pair = if ablations.no_modular {
            if !self.memory.is_empty() {
                train_full_on_memory(
                    &mut self.base,
                    &self.memory,
                    self.config.lambda,
                    &head_hyper,
                    salt(t, SALT_HEAD),
                )?;
            }
            spawn_head(&self.base)
        } else {
            let mut pair = spawn_head(&self.base);
            if !self.memory.is_empty() {
                let lambda = self.config.lambda;
                if self.config.head_trains_embeddings {
                    train_head_joint_on_memory(&mut pair, &self.memory, lambda, &head_hyper, salt(t, SALT_HEAD))?;
                    self.base.embeddings.clone_from(&pair.base.embeddings);
                } else {
                    train_head_on_memory(&mut pair, &self.memory, lambda, &head_hyper, salt(t, SALT_HEAD))?;
                }
            }
            pair
        };

        if ablations.no_new {
            self.memory.append_new(data)?;
            report.cap_truncated += self.memory.enforce_cap(policy.cap, cap_seed ^ t as u64);
            report.n_partitions = self.memory.n_partitions();
            report.total_size = self.memory.len();
        }

        self.snapshots.insert(
            t,
            ModelSnapshot {
                day: t,
                model: pair.clone(),
            },
        );
        let keep: BTreeSet<u32> = self.memory.days().into_iter().chain([t]).collect();
        self.snapshots.retain(|d, _| keep.contains(d));
        self.inference = Some(pair);
        self.last_day = Some(t);
        Ok(StepOutcome { report, delta, scores })
    }
}

impl Learner for ColfLearner {
    fn predict(&self, data: &DayPartition) -> Result<Option<Vec<f64>>> {
        self.inference.as_ref().map(|m| predict(m, &data.samples)).transpose()
    }

    fn observe(&mut self, data: &DayPartition) -> Result<Option<UpdateReport>> {
        self.step(data).map(|o| Some(o.report))
    }

    fn memory_size(&self) -> usize {
        self.memory.len()
    }

    fn trained_through(&self) -> Option<u32> {
        self.last_day
    }
}

/// The base model alone, updated on each day as it arrives.
#[derive(Debug, Clone)]
pub struct IncrementalLearner {
    config: StrategyConfig,
    model: ModelParams,
    last_day: Option<u32>,
}

impl IncrementalLearner {
    pub fn new(config: StrategyConfig, data_schema: &FeatureSchema) -> Result<Self> {
        config.validate()?;
        let model = config.model.build(data_schema, config.seed)?;
        Ok(Self {
            config,
            model,
            last_day: None,
        })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }
}

impl Learner for IncrementalLearner {
    fn predict(&self, data: &DayPartition) -> Result<Option<Vec<f64>>> {
        if self.last_day.is_none() {
            return Ok(None);
        }
        predict(&self.model, &data.samples).map(Some)
    }

    fn observe(&mut self, data: &DayPartition) -> Result<Option<UpdateReport>> {
        check_next_day(self.last_day, data.day)?;
        let id_seed = self.model.id_seed;
        register_new_ids(&mut self.model, &data.samples, id_seed);
        update_base(&mut self.model, data, &self.config.base_hyper(), salt(data.day, SALT_BASE))?;
        self.last_day = Some(data.day);
        Ok(None)
    }

    fn memory_size(&self) -> usize {
        0
    }

    fn trained_through(&self) -> Option<u32> {
        self.last_day
    }
}

#[derive(Debug, Clone)]
enum Replay {
    Window(MemoryStore),
    Cbrs(CbrsPool),
    Ader(AderPool),
}

/// Baselines that keep the base model plus a head trained on a replay set
/// chosen by a fixed rule.
#[derive(Debug, Clone)]
pub struct ReplayLearner {
    config: StrategyConfig,
    base: ModelParams,
    inference: Option<ModularPair>,
    replay: Replay,
    last_day: Option<u32>,
}

impl ReplayLearner {
    pub fn new(config: StrategyConfig, data_schema: &FeatureSchema) -> Result<Self> {
        config.validate()?;
        let cap = config.policy.cap;
        let replay = match config.kind {
            StrategyKind::SlidingWindow => Replay::Window(MemoryStore::new()),
            StrategyKind::Cbrs => Replay::Cbrs(CbrsPool::new(cap, config.seed)),
            StrategyKind::AderFreq => Replay::Ader(AderPool::new(cap, config.seed)),
            other => {
                return Err(ColfError::InvalidConfig(format!(
                    "{other} is not a replay baseline"
                )))
            }
        };
        let base = config.model.build(data_schema, config.seed)?;
        Ok(Self {
            config,
            base,
            inference: None,
            replay,
            last_day: None,
        })
    }

    fn replay_samples(&self) -> Vec<&ClickSample> {
        match &self.replay {
            Replay::Window(m) => m.iter().collect(),
            Replay::Cbrs(p) => p.samples().iter().collect(),
            Replay::Ader(p) => p.samples().iter().collect(),
        }
    }
}

impl Learner for ReplayLearner {
    fn predict(&self, data: &DayPartition) -> Result<Option<Vec<f64>>> {
        self.inference.as_ref().map(|m| predict(m, &data.samples)).transpose()
    }

    fn observe(&mut self, data: &DayPartition) -> Result<Option<UpdateReport>> {
        check_next_day(self.last_day, data.day)?;
        let t = data.day;
        let id_seed = self.base.id_seed;
        register_new_ids(&mut self.base, &data.samples, id_seed);
        update_base(&mut self.base, data, &self.config.base_hyper(), salt(t, SALT_BASE))?;

        let cap = self.config.policy.cap;
        let mut cap_truncated = 0;
        match &mut self.replay {
            Replay::Window(m) => {
                m.append_new(data)?;
                let oldest = (t + 1).saturating_sub(self.config.window_days as u32);
                m.retain_days(|d| d >= oldest);
                cap_truncated = m.enforce_cap(cap, self.config.seed ^ t as u64);
            }
            Replay::Cbrs(p) => p.update(&data.samples),
            Replay::Ader(p) => p.update(&data.samples, t as u64),
        }

        let mut pair = spawn_head(&self.base);
        let samples = self.replay_samples();
        if !samples.is_empty() {
            train_head_on_samples(
                &mut pair,
                &samples,
                self.config.lambda,
                &self.config.head_hyper(),
                salt(t, SALT_HEAD),
            )?;
        }
        let days: BTreeSet<u32> = samples.iter().map(|s| s.day).collect();
        let report = UpdateReport {
            day: t,
            n_partitions: days.len(),
            total_size: samples.len(),
            discarded_days: Vec::new(),
            dropped_irrelevant: 0,
            cap_truncated,
        };
        self.inference = Some(pair);
        self.last_day = Some(t);
        Ok(Some(report))
    }

    fn memory_size(&self) -> usize {
        self.replay_samples().len()
    }

    fn trained_through(&self) -> Option<u32> {
        self.last_day
    }
}

/// The learner for `config.kind`.
pub fn build_learner(config: &StrategyConfig, data_schema: &FeatureSchema) -> Result<Box<dyn Learner>> {
    Ok(match config.kind {
        StrategyKind::Colf => Box::new(ColfLearner::new(config.clone(), data_schema)?),
        StrategyKind::Incremental => Box::new(IncrementalLearner::new(config.clone(), data_schema)?),
        _ => Box::new(ReplayLearner::new(config.clone(), data_schema)?),
    })
}
