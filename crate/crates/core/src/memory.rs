//! Date-partitioned replay memory and its population policy: discard
//! partitions whose model has fallen behind, drop exemplars of items that
//! vanished from the latest day, append the latest day, then enforce the
//! capacity bound.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{ColfError, Result};
use crate::eval::auc;
use crate::models::{predict, ModelSnapshot};
use crate::nn::logloss;
use crate::rng::{rng_for, tag};
use crate::stream::{ClickSample, DayPartition};

/// How a retained model is scored on the latest day. Higher is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Auc,
    /// Negated log-loss.
    NegLogloss,
}

impl Criterion {
    pub fn score(self, preds: &[f64], labels: &[u8]) -> Result<f64> {
        match self {
            Criterion::Auc => auc(preds, labels),
            Criterion::NegLogloss => logloss(preds, labels).map(|l| -l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryPolicyConfig {
    /// A partition is old when the latest model beats its model by more than this.
    pub epsilon: f64,
    /// Exemplars whose item frequency on the latest day is below this are dropped.
    pub epsilon_p: f64,
    pub cap: usize,
    pub criterion: Criterion,
}

impl Default for MemoryPolicyConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.003,
            epsilon_p: 1e-6,
            cap: 7 * 50_000,
            criterion: Criterion::Auc,
        }
    }
}

impl MemoryPolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(ColfError::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.epsilon_p >= 0.0) {
            return Err(ColfError::InvalidConfig(format!(
                "epsilon_p must be >= 0, got {}",
                self.epsilon_p
            )));
        }
        if self.cap == 0 {
            return Err(ColfError::InvalidConfig("cap must be positive".into()));
        }
        Ok(())
    }
}

/// Labeled exemplars keyed by collection day, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStore {
    partitions: BTreeMap<u32, Vec<ClickSample>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store from `(day, samples)` pairs; every sample must carry its
    /// partition's day and days must be distinct.
    pub fn from_partitions(parts: impl IntoIterator<Item = (u32, Vec<ClickSample>)>) -> Result<Self> {
        let mut store = Self::new();
        for (day, samples) in parts {
            if samples.iter().any(|s| s.day != day) {
                return Err(ColfError::InvalidInput(format!(
                    "partition {day} holds samples of another day"
                )));
            }
            if store.partitions.insert(day, samples).is_some() {
                return Err(ColfError::InvalidInput(format!("duplicate partition {day}")));
            }
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.partitions.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.values().all(Vec::is_empty)
    }

    pub fn n_partitions(&self) -> usize {
        self.partitions.len()
    }

    pub fn days(&self) -> Vec<u32> {
        self.partitions.keys().copied().collect()
    }

    pub fn partition(&self, day: u32) -> Option<&[ClickSample]> {
        self.partitions.get(&day).map(Vec::as_slice)
    }

    pub fn partitions(&self) -> impl Iterator<Item = (u32, &[ClickSample])> {
        self.partitions.iter().map(|(&d, s)| (d, s.as_slice()))
    }

    /// All exemplars, oldest partition first.
    pub fn iter(&self) -> impl Iterator<Item = &ClickSample> {
        self.partitions.values().flatten()
    }

    /// Removes every partition whose model trails the latest model by more
    /// than `epsilon`. Returns the removed partitions.
    pub fn discard_old(&mut self, scores: &BTreeMap<u32, f64>, score_latest: f64, epsilon: f64) -> Result<MemoryStore> {
        let mut removed = MemoryStore::new();
        for day in self.days() {
            let score = scores.get(&day).ok_or_else(|| {
                ColfError::InvalidState(format!("no score for memory partition {day}"))
            })?;
            if score_latest - score > epsilon {
                let part = self.partitions.remove(&day).expect("day taken from keys");
                removed.partitions.insert(day, part);
            }
        }
        Ok(removed)
    }

    /// Drops exemplars whose item probability under `estimator` is below
    /// `epsilon_p`; partitions left empty disappear. Returns the dropped
    /// exemplars.
    pub fn refresh_relevant(&mut self, estimator: &FrequencyEstimator, epsilon_p: f64) -> Vec<ClickSample> {
        let mut dropped = Vec::new();
        for part in self.partitions.values_mut() {
            let (keep, drop): (Vec<_>, Vec<_>) = std::mem::take(part)
                .into_iter()
                .partition(|s| estimator.prob(s.item_id) >= epsilon_p);
            *part = keep;
            dropped.extend(drop);
        }
        self.partitions.retain(|_, p| !p.is_empty());
        dropped
    }

    /// Keeps only partitions whose day satisfies `keep`. Returns how many
    /// exemplars were removed.
    pub fn retain_days(&mut self, mut keep: impl FnMut(u32) -> bool) -> usize {
        let before = self.len();
        self.partitions.retain(|&d, _| keep(d));
        before - self.len()
    }

    /// Appends a whole day as a new partition.
    pub fn append_new(&mut self, data: &DayPartition) -> Result<()> {
        if let Some((&last, _)) = self.partitions.last_key_value() {
            if data.day <= last {
                return Err(ColfError::InvalidInput(format!(
                    "cannot append day {} after day {last}",
                    data.day
                )));
            }
        }
        self.partitions.insert(data.day, data.samples.clone());
        Ok(())
    }

    /// Removes whole partitions oldest first while over `cap`; a newest
    /// partition that alone exceeds `cap` is uniformly subsampled (seeded,
    /// order preserved). Returns how many exemplars were removed.
    pub fn enforce_cap(&mut self, cap: usize, seed: u64) -> usize {
        let mut removed = 0;
        while self.len() > cap && self.partitions.len() > 1 {
            let (_, part) = self.partitions.pop_first().expect("non-empty");
            removed += part.len();
        }
        if self.len() > cap {
            let (&day, part) = self.partitions.iter_mut().next().expect("non-empty");
            let mut rng = rng_for(&[seed, tag::CAP, day as u64]);
            let mut keep = index::sample(&mut rng, part.len(), cap).into_vec();
            keep.sort_unstable();
            removed += part.len() - cap;
            *part = keep.into_iter().map(|i| part[i].clone()).collect();
            if cap == 0 {
                self.partitions.clear();
            }
        }
        removed
    }
}

/// Maximum-likelihood item frequency of one day.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEstimator {
    counts: HashMap<u32, u64>,
    total: u64,
    smoothing: f64,
}

impl FrequencyEstimator {
    pub fn fit(data: &DayPartition) -> Result<Self> {
        Self::fit_smoothed(data, 0.0)
    }

    /// Unseen items receive probability `smoothing`.
    pub fn fit_smoothed(data: &DayPartition, smoothing: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(ColfError::InvalidInput(format!(
                "day {} has no samples",
                data.day
            )));
        }
        let mut counts = HashMap::new();
        for s in &data.samples {
            *counts.entry(s.item_id).or_insert(0u64) += 1;
        }
        Ok(Self {
            counts,
            total: data.len() as u64,
            smoothing,
        })
    }

    pub fn prob(&self, item: u32) -> f64 {
        match self.counts.get(&item) {
            Some(&c) => c as f64 / self.total as f64,
            None => self.smoothing,
        }
    }

    pub fn n_items(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Scores the snapshot of every day in `days` on `eval_data`.
pub fn score_partitions(
    snapshots: &BTreeMap<u32, ModelSnapshot>,
    days: &BTreeSet<u32>,
    eval_data: &DayPartition,
    criterion: Criterion,
) -> Result<BTreeMap<u32, f64>> {
    let labels = eval_data.labels();
    days.iter()
        .map(|&day| {
            let snap = snapshots.get(&day).ok_or_else(|| {
                ColfError::InvalidState(format!("no model snapshot for day {day}"))
            })?;
            let preds = predict(&snap.model, &eval_data.samples)?;
            Ok((day, criterion.score(&preds, &labels)?))
        })
        .collect()
}

/// Which steps of [`update`] run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateSteps {
    pub discard_old: bool,
    pub refresh_relevant: bool,
    pub append_new: bool,
}

impl Default for UpdateSteps {
    fn default() -> Self {
        Self {
            discard_old: true,
            refresh_relevant: true,
            append_new: true,
        }
    }
}

/// One row of the memory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub day: u32,
    pub n_partitions: usize,
    pub total_size: usize,
    pub discarded_days: Vec<u32>,
    pub dropped_irrelevant: usize,
    pub cap_truncated: usize,
}

/// Everything an update removed or added, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryDelta {
    pub before: MemoryStore,
    pub old: MemoryStore,
    pub irrelevant: Vec<ClickSample>,
    pub appended: Vec<ClickSample>,
    /// Memory after appending, before the capacity bound.
    pub pre_cap: MemoryStore,
}

/// `M_t = M_{t-1} - old - irrelevant + new`, then the capacity bound.
///
/// `scores` must cover every partition of `memory` (ignored when old-memory
/// discarding is off); `score_latest` is the previous inference model's score.
pub fn update(
    memory: &mut MemoryStore,
    scores: &BTreeMap<u32, f64>,
    score_latest: f64,
    data: &DayPartition,
    policy: &MemoryPolicyConfig,
    steps: UpdateSteps,
    seed: u64,
) -> Result<(UpdateReport, MemoryDelta)> {
    policy.validate()?;
    let before = memory.clone();
    let old = if steps.discard_old && !memory.is_empty() {
        memory.discard_old(scores, score_latest, policy.epsilon)?
    } else {
        MemoryStore::new()
    };
    let irrelevant = if steps.refresh_relevant {
        let est = FrequencyEstimator::fit(data)?;
        memory.refresh_relevant(&est, policy.epsilon_p)
    } else {
        Vec::new()
    };
    let appended = if steps.append_new {
        memory.append_new(data)?;
        data.samples.clone()
    } else {
        Vec::new()
    };
    let pre_cap = memory.clone();
    let cap_truncated = memory.enforce_cap(policy.cap, seed ^ data.day as u64);
    let report = UpdateReport {
        day: data.day,
        n_partitions: memory.n_partitions(),
        total_size: memory.len(),
        discarded_days: old.days(),
        dropped_irrelevant: irrelevant.len(),
        cap_truncated,
    };
    Ok((
        report,
        MemoryDelta {
            before,
            old,
            irrelevant,
            appended,
            pre_cap,
        },
    ))
}
