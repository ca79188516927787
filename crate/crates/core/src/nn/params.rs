use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseLayer, DenseStack};
use super::embedding::EmbeddingTable;
use super::network::Network;
use crate::error::{ColfError, Result};
use crate::rng::{rng_for, tag};
use crate::schema::FeatureSchema;

/// Half-width of the uniform initializer for embeddings and dense weights.
pub const DEFAULT_INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Embeddings feed a single linear unit.
    Lr,
    /// Embeddings feed ReLU hidden layers, then a linear unit.
    EmbedMlp,
}

/// Embedding tables plus the dense stack on top of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub schema: FeatureSchema,
    pub embeddings: Vec<EmbeddingTable>,
    pub stack: DenseStack,
    /// Seed of the per-id embedding rows.
    pub id_seed: u64,
}

impl ModelParams {
    /// Seeded initialization. `hidden` must be empty for [`ModelKind::Lr`] and
    /// non-empty for [`ModelKind::EmbedMlp`].
    pub fn init(schema: &FeatureSchema, kind: ModelKind, hidden: &[usize], seed: u64) -> Result<Self> {
        Self::init_with_scale(schema, kind, hidden, seed, DEFAULT_INIT_SCALE)
    }

    pub fn init_with_scale(
        schema: &FeatureSchema,
        kind: ModelKind,
        hidden: &[usize],
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        match kind {
            ModelKind::Lr if !hidden.is_empty() => {
                return Err(ColfError::InvalidConfig(
                    "logistic regression takes no hidden layers".into(),
                ))
            }
            ModelKind::EmbedMlp if hidden.is_empty() => {
                return Err(ColfError::InvalidConfig(
                    "embedding MLP needs at least one hidden layer".into(),
                ))
            }
            _ => {}
        }
        if hidden.contains(&0) {
            return Err(ColfError::InvalidConfig("hidden layer of width 0".into()));
        }
        if !(init_scale >= 0.0 && init_scale.is_finite()) {
            return Err(ColfError::InvalidConfig(format!("init scale {init_scale}")));
        }

        let mut widths = vec![schema.input_width()];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let activation = if l + 2 == widths.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            let mut layer = DenseLayer::zeros(pair[0], pair[1], activation);
            let mut rng = rng_for(&[seed, tag::INIT, l as u64]);
            if init_scale > 0.0 {
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = rng.gen_range(-init_scale..=init_scale));
            }
            layers.push(layer);
        }

        let embeddings = schema
            .fields()
            .iter()
            .enumerate()
            .map(|(i, f)| EmbeddingTable::new(f.name.clone(), i, f.dim, init_scale))
            .collect();

        Ok(Self {
            kind,
            schema: schema.clone(),
            embeddings,
            stack: DenseStack::new(layers)?,
            id_seed: seed,
        })
    }

    pub fn network(&self) -> Network<'_> {
        Network::new(&self.schema, &self.embeddings, &self.stack)
    }

    /// Sets every dense weight and bias to zero.
    pub fn zero_dense(&mut self) {
        for layer in self.stack.layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn n_rows(&self) -> usize {
        self.embeddings.iter().map(EmbeddingTable::len).sum()
    }

    pub fn table(&self, field: &str) -> Option<&EmbeddingTable> {
        self.embeddings.iter().find(|t| t.field_name() == field)
    }
}

/// [`ModelKind::EmbedMlp`] initialization.
pub fn init_params(schema: &FeatureSchema, hidden: &[usize], seed: u64) -> Result<ModelParams> {
    ModelParams::init(schema, ModelKind::EmbedMlp, hidden, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::ctr(1, 4).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(&schema(), &[32], 7).unwrap();
        let b = init_params(&schema(), &[32], 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_changes_weights() {
        let a = init_params(&schema(), &[32], 7).unwrap();
        let b = init_params(&schema(), &[32], 8).unwrap();
        assert_ne!(a.stack, b.stack);
    }

    #[test]
    fn empty_or_zero_width_hidden_is_rejected() {
        assert!(matches!(
            init_params(&schema(), &[], 7),
            Err(ColfError::InvalidConfig(_))
        ));
        assert!(matches!(
            init_params(&schema(), &[8, 0], 7),
            Err(ColfError::InvalidConfig(_))
        ));
        assert!(ModelParams::init(&schema(), ModelKind::Lr, &[4], 7).is_err());
    }

    #[test]
    fn weights_within_scale_and_biases_zero() {
        let p = init_params(&schema(), &[16, 8], 3).unwrap();
        for layer in p.stack.layers() {
            assert!(layer.weights.iter().all(|w| w.abs() <= DEFAULT_INIT_SCALE));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(p.stack.widths(), vec![16, 8, 1]);
        let lr = ModelParams::init(&schema(), ModelKind::Lr, &[], 3).unwrap();
        assert_eq!(lr.stack.layers().len(), 1);
    }
}
