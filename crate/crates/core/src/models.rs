//! CTR models (logistic regression over embeddings, embedding-MLP) and the
//! modular pair: a base model updated on each new day and an inference head
//! that reuses the base embeddings while training its own dense layers on
//! replay memory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ColfError, Result};
use crate::memory::MemoryStore;
use crate::nn::{
    DenseStack, EmbeddingTable, Lookup, ModelKind, ModelParams, Network, OptimizerConfig, OptimizerState, SoftTargets,
};
use crate::rng::{rng_for, tag};
use crate::schema::{FeatureSchema, FieldSpec};
use crate::stream::{ClickSample, DayPartition};

/// Model family and sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::EmbedMlp,
            embedding_dim: 8,
            hidden: vec![32],
        }
    }
}

impl ModelSpec {
    pub fn lr(embedding_dim: usize) -> Self {
        Self {
            kind: ModelKind::Lr,
            embedding_dim,
            hidden: Vec::new(),
        }
    }

    /// Initializes a model over the fields of `data_schema`, re-dimensioned
    /// to `embedding_dim`.
    pub fn build(&self, data_schema: &FeatureSchema, seed: u64) -> Result<ModelParams> {
        if self.embedding_dim == 0 {
            return Err(ColfError::InvalidConfig("embedding_dim must be positive".into()));
        }
        let fields = data_schema
            .fields()
            .iter()
            .map(|f| FieldSpec::new(f.name.clone(), f.kind, self.embedding_dim))
            .collect();
        ModelParams::init(&FeatureSchema::new(fields)?, self.kind, &self.hidden, seed)
    }
}

/// Mini-batch training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 256,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ColfError::InvalidConfig("batch_size must be positive".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainStats {
    pub steps: usize,
    /// Mean mini-batch objective over the final epoch (NaN when no epoch ran).
    pub last_epoch_loss: f64,
}

/// Base model `g` together with an inference head `f`. The head owns its
/// dense stack and reads the embedding tables held in `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularPair {
    pub base: ModelParams,
    pub head: DenseStack,
}

impl ModularPair {
    /// The inference network: base embeddings feeding the head's dense stack.
    pub fn network(&self) -> Network<'_> {
        Network::new(&self.base.schema, &self.base.embeddings, &self.head)
    }
}

/// Anything that can score click samples.
pub trait Predictor {
    fn network(&self) -> Network<'_>;
    fn id_seed(&self) -> u64;
}

impl Predictor for ModelParams {
    fn network(&self) -> Network<'_> {
        ModelParams::network(self)
    }

    fn id_seed(&self) -> u64 {
        self.id_seed
    }
}

impl Predictor for ModularPair {
    fn network(&self) -> Network<'_> {
        ModularPair::network(self)
    }

    fn id_seed(&self) -> u64 {
        self.base.id_seed
    }
}

/// Adds a seeded row for every id in `samples` not yet in the tables.
/// Returns how many rows were added.
pub fn register_new_ids(params: &mut ModelParams, samples: &[ClickSample], seed: u64) -> usize {
    let slots = params.schema.slots();
    let mut added = 0;
    for s in samples {
        for (table, slot) in params.embeddings.iter_mut().zip(&slots) {
            if table.register(seed, slot.id(s)) {
                added += 1;
            }
        }
    }
    added
}

/// Click probabilities. Ids without a row are scored with the row they would
/// receive on registration; nothing is written.
pub fn predict(model: &impl Predictor, data: &[ClickSample]) -> Result<Vec<f64>> {
    predict_counted(model, data).map(|(p, _)| p)
}

/// Like [`predict`], also returning how many id lookups hit unregistered ids.
pub fn predict_counted(model: &impl Predictor, data: &[ClickSample]) -> Result<(Vec<f64>, usize)> {
    model.network().forward(
        data,
        Lookup::Fresh {
            seed: model.id_seed(),
        },
    )
}

/// Embedding tables as seen by a training run.
enum Tables<'a> {
    Frozen(&'a [EmbeddingTable]),
    Trainable(&'a mut [EmbeddingTable]),
}

impl Tables<'_> {
    fn get(&self) -> &[EmbeddingTable] {
        match self {
            Tables::Frozen(t) => t,
            Tables::Trainable(t) => t,
        }
    }
}

/// Mini-batch descent over `samples` with a fresh optimizer.
fn descend(
    schema: &FeatureSchema,
    mut tables: Tables<'_>,
    stack: &mut DenseStack,
    samples: &[&ClickSample],
    soft: Option<(&[f64], f64)>,
    hyper: &TrainHyper,
    salt: u64,
) -> Result<TrainStats> {
    let train_embeddings = matches!(tables, Tables::Trainable(_));
    hyper.validate()?;
    let mut opt = OptimizerState::new(hyper.optimizer)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch: Vec<ClickSample> = Vec::with_capacity(hyper.batch_size);
    let mut labels: Vec<u8> = Vec::with_capacity(hyper.batch_size);
    let mut targets: Vec<f64> = Vec::with_capacity(hyper.batch_size);
    let mut stats = TrainStats {
        steps: 0,
        last_epoch_loss: f64::NAN,
    };

    for epoch in 0..hyper.epochs {
        let mut rng = rng_for(&[hyper.seed, tag::SHUFFLE, salt, epoch as u64]);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            labels.clear();
            targets.clear();
            for &i in chunk {
                batch.push(samples[i].clone());
                labels.push(samples[i].label);
                if let Some((q, _)) = soft {
                    targets.push(q[i]);
                }
            }
            let soft_batch = soft.map(|(_, weight)| SoftTargets {
                probs: &targets,
                weight,
            });
            let net = Network::new(schema, tables.get(), stack);
            let (loss, grads) = net.backward(&batch, &labels, soft_batch, train_embeddings)?;
            match &mut tables {
                Tables::Trainable(t) => opt.apply(t, stack, &grads)?,
                Tables::Frozen(_) => opt.apply(&mut [], stack, &grads)?,
            }
            loss_sum += loss;
            n_batches += 1;
            stats.steps += 1;
        }
        stats.last_epoch_loss = loss_sum / n_batches.max(1) as f64;
    }
    Ok(stats)
}

/// Updates the base model on one day of data: `hyper.epochs` passes of
/// mini-batch descent over that day only. `salt` decorrelates shuffles across
/// calls (typically the day number).
pub fn update_base(g: &mut ModelParams, data: &DayPartition, hyper: &TrainHyper, salt: u64) -> Result<TrainStats> {
    if data.is_empty() {
        return Err(ColfError::InvalidInput(format!(
            "day {} has no samples",
            data.day
        )));
    }
    let samples: Vec<&ClickSample> = data.samples.iter().collect();
    let ModelParams {
        schema,
        embeddings,
        stack,
        ..
    } = g;
    descend(schema, Tables::Trainable(embeddings), stack, &samples, None, hyper, salt)
}

/// Creates an inference head whose dense layers start as a copy of `g`'s.
pub fn spawn_head(g: &ModelParams) -> ModularPair {
    ModularPair {
        base: g.clone(),
        head: g.stack.clone(),
    }
}

/// Soft targets: the base model's predictions on the memory.
fn base_targets(base: &ModelParams, samples: &[&ClickSample]) -> Result<Vec<f64>> {
    let owned: Vec<ClickSample> = samples.iter().map(|s| (*s).clone()).collect();
    let (q, _) = base.network().forward(&owned, Lookup::Strict)?;
    Ok(q)
}

/// Trains the head's dense layers on every memory exemplar, minimizing
/// `BCE(f(x), y) + lambda * BCE(f(x), g(x))`. The shared embeddings and the
/// base dense stack are never written.
pub fn train_head_on_memory(
    pair: &mut ModularPair,
    memory: &MemoryStore,
    lambda: f64,
    hyper: &TrainHyper,
    salt: u64,
) -> Result<TrainStats> {
    let samples: Vec<&ClickSample> = memory.iter().collect();
    train_head_on_samples(pair, &samples, lambda, hyper, salt)
}

/// [`train_head_on_memory`] over an arbitrary replay set.
pub fn train_head_on_samples(
    pair: &mut ModularPair,
    samples: &[&ClickSample],
    lambda: f64,
    hyper: &TrainHyper,
    salt: u64,
) -> Result<TrainStats> {
    if samples.is_empty() {
        return Err(ColfError::InvalidInput("replay memory is empty".into()));
    }
    check_lambda(lambda)?;
    let targets = if lambda > 0.0 {
        Some(base_targets(&pair.base, samples)?)
    } else {
        None
    };
    let ModularPair { base, head } = pair;
    descend(
        &base.schema,
        Tables::Frozen(&base.embeddings),
        head,
        samples,
        targets.as_deref().map(|q| (q, lambda)),
        hyper,
        salt,
    )
}

/// Variant of [`train_head_on_memory`] in which the shared embedding tables
/// are trained along with the head's dense layers.
pub fn train_head_joint_on_memory(
    pair: &mut ModularPair,
    memory: &MemoryStore,
    lambda: f64,
    hyper: &TrainHyper,
    salt: u64,
) -> Result<TrainStats> {
    let samples: Vec<&ClickSample> = memory.iter().collect();
    if samples.is_empty() {
        return Err(ColfError::InvalidInput("replay memory is empty".into()));
    }
    check_lambda(lambda)?;
    let targets = if lambda > 0.0 {
        Some(base_targets(&pair.base, &samples)?)
    } else {
        None
    };
    let ModularPair { base, head } = pair;
    descend(
        &base.schema,
        Tables::Trainable(&mut base.embeddings),
        head,
        &samples,
        targets.as_deref().map(|q| (q, lambda)),
        hyper,
        salt,
    )
}

/// Continues every parameter of `g` (embeddings included) on the memory with
/// the same objective as [`train_head_on_memory`], distilling towards `g`'s
/// own predictions from before this call.
pub fn train_full_on_memory(
    g: &mut ModelParams,
    memory: &MemoryStore,
    lambda: f64,
    hyper: &TrainHyper,
    salt: u64,
) -> Result<TrainStats> {
    if memory.is_empty() {
        return Err(ColfError::InvalidInput("replay memory is empty".into()));
    }
    check_lambda(lambda)?;
    let samples: Vec<&ClickSample> = memory.iter().collect();
    let targets = if lambda > 0.0 {
        Some(base_targets(g, &samples)?)
    } else {
        None
    };
    let ModelParams {
        schema,
        embeddings,
        stack,
        ..
    } = g;
    descend(
        schema,
        Tables::Trainable(embeddings),
        stack,
        &samples,
        targets.as_deref().map(|q| (q, lambda)),
        hyper,
        salt,
    )
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ColfError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// The head objective `mean[BCE(f, y) + lambda * BCE(f, g)]` over the memory.
pub fn head_objective(pair: &ModularPair, memory: &MemoryStore, lambda: f64) -> Result<f64> {
    let samples: Vec<ClickSample> = memory.iter().cloned().collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let (q, _) = pair.base.network().forward(&samples, Lookup::Strict)?;
    pair.network().objective(
        &samples,
        &labels,
        Some(SoftTargets {
            probs: &q,
            weight: lambda,
        }),
    )
}

/// Inference model retained for the day it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub day: u32,
    pub model: ModularPair,
}

pub const SNAPSHOT_FORMAT: &str = "colf-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    format: String,
    version: u32,
    snapshot: ModelSnapshot,
}

/// Writes a snapshot as versioned JSON. Floats use shortest round-trip
/// formatting, so [`load_snapshot`] restores every bit.
pub fn save_snapshot(snapshot: &ModelSnapshot, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let file = SnapshotFile {
        format: SNAPSHOT_FORMAT.into(),
        version: SNAPSHOT_VERSION,
        snapshot: snapshot.clone(),
    };
    serde_json::to_writer(&mut out, &file).map_err(|e| ColfError::Io(e.to_string()))?;
    out.flush()?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<ModelSnapshot> {
    let file: SnapshotFile = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| ColfError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    if file.format != SNAPSHOT_FORMAT || file.version != SNAPSHOT_VERSION {
        return Err(ColfError::Parse {
            line: 1,
            message: format!(
                "unsupported snapshot format '{}' version {}",
                file.format, file.version
            ),
        });
    }
    Ok(file.snapshot)
}
