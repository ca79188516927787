//! Forward pass, clipped cross-entropy and hand-written backpropagation over
//! an embedding layer followed by a dense stack.

use std::collections::HashMap;

use super::dense::{sigmoid, Activation, DenseStack};
use super::embedding::EmbeddingTable;
use crate::error::{ColfError, Result};
use crate::schema::{FeatureSchema, FieldSlot};
use crate::stream::ClickSample;

/// Predictions are clipped to `[EPS_CLIP, 1 - EPS_CLIP]` before any logarithm.
pub const EPS_CLIP: f64 = 1e-7;

const P_MIN: f64 = f64::MIN_POSITIVE;
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Borrowed view of everything a forward pass reads.
#[derive(Clone, Copy)]
pub struct Network<'a> {
    pub schema: &'a FeatureSchema,
    pub embeddings: &'a [EmbeddingTable],
    pub stack: &'a DenseStack,
}

/// How to treat ids with no embedding row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Strict,
    /// Substitute the deterministic row the id would receive on registration.
    Fresh { seed: u64 },
}

/// Optional distillation targets: per-sample soft labels and their weight.
#[derive(Debug, Clone, Copy)]
pub struct SoftTargets<'a> {
    pub probs: &'a [f64],
    pub weight: f64,
}

/// Gradient of one dense layer, same shape as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient rows for one embedding table; only rows touched by the batch
/// appear, in first-touch order.
#[derive(Debug, Clone, Default)]
pub struct RowGrads {
    dim: usize,
    rows: Vec<usize>,
    values: Vec<f64>,
    slot: HashMap<usize, usize>,
}

impl RowGrads {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, row: usize) -> Option<&[f64]> {
        self.slot
            .get(&row)
            .map(|&s| &self.values[s * self.dim..(s + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows
            .iter()
            .enumerate()
            .map(|(s, &r)| (r, &self.values[s * self.dim..(s + 1) * self.dim]))
    }

    fn entry(&mut self, row: usize) -> &mut [f64] {
        let s = match self.slot.get(&row) {
            Some(&s) => s,
            None => {
                let s = self.rows.len();
                self.rows.push(row);
                self.slot.insert(row, s);
                self.values.resize(self.values.len() + self.dim, 0.0);
                s
            }
        };
        &mut self.values[s * self.dim..(s + 1) * self.dim]
    }

    fn scale(&mut self, k: f64) {
        self.values.iter_mut().for_each(|v| *v *= k);
    }
}

/// Gradients mirroring the parameter tree. `embeddings` is empty when the
/// embedding layer is frozen.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dense: Vec<LayerGrad>,
    pub embeddings: Vec<RowGrads>,
}

impl Gradients {
    fn zeros(net: &Network<'_>, with_embeddings: bool) -> Self {
        let dense = net
            .stack
            .layers()
            .iter()
            .map(|l| LayerGrad {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        let embeddings = if with_embeddings {
            net.embeddings.iter().map(|t| RowGrads::new(t.dim())).collect()
        } else {
            Vec::new()
        };
        Self { dense, embeddings }
    }

    fn scale(&mut self, k: f64) {
        for g in &mut self.dense {
            g.weights.iter_mut().for_each(|v| *v *= k);
            g.bias.iter_mut().for_each(|v| *v *= k);
        }
        self.embeddings.iter_mut().for_each(|e| e.scale(k));
    }
}

/// Reusable per-sample buffers.
struct Scratch {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev_delta: Vec<f64>,
}

impl Scratch {
    fn new(stack: &DenseStack) -> Self {
        let widest = stack
            .layers()
            .iter()
            .map(|l| l.in_width.max(l.out_width))
            .max()
            .unwrap_or(1);
        Self {
            input: vec![0.0; stack.input_width()],
            pre: stack.layers().iter().map(|l| vec![0.0; l.out_width]).collect(),
            out: stack.layers().iter().map(|l| vec![0.0; l.out_width]).collect(),
            delta: Vec::with_capacity(widest),
            prev_delta: Vec::with_capacity(widest),
        }
    }
}

impl<'a> Network<'a> {
    pub fn new(schema: &'a FeatureSchema, embeddings: &'a [EmbeddingTable], stack: &'a DenseStack) -> Self {
        debug_assert_eq!(schema.len(), embeddings.len());
        Self {
            schema,
            embeddings,
            stack,
        }
    }

    /// Fills `scratch.input` with the concatenated embeddings of `sample`.
    /// Returns the number of ids that had no row.
    fn gather(&self, slots: &[FieldSlot], sample: &ClickSample, lookup: Lookup, input: &mut [f64]) -> Result<usize> {
        let mut offset = 0;
        let mut fresh = 0;
        for (table, slot) in self.embeddings.iter().zip(slots) {
            let id = slot.id(sample);
            let dim = table.dim();
            match table.row_index(id) {
                Some(r) => input[offset..offset + dim].copy_from_slice(table.row_at(r)),
                None => match lookup {
                    Lookup::Strict => {
                        return Err(ColfError::MissingId {
                            field: table.field_name().to_string(),
                            id,
                        })
                    }
                    Lookup::Fresh { seed } => {
                        input[offset..offset + dim].copy_from_slice(&table.fresh_row(seed, id));
                        fresh += 1;
                    }
                },
            }
            offset += dim;
        }
        Ok(fresh)
    }

    fn check_batch(&self, batch: &[ClickSample]) -> Result<()> {
        let n_ctx = self.schema.n_context();
        if let Some(s) = batch.iter().find(|s| s.context_ids.len() != n_ctx) {
            return Err(ColfError::InvalidInput(format!(
                "sample (day {}, user {}, item {}) has {} context ids, schema expects {n_ctx}",
                s.day,
                s.user_id,
                s.item_id,
                s.context_ids.len()
            )));
        }
        Ok(())
    }

    /// Runs the dense stack on `scratch.input` and returns the output logit.
    #[inline]
    fn run_stack(&self, scratch: &mut Scratch) -> f64 {
        let layers = self.stack.layers();
        for (l, layer) in layers.iter().enumerate() {
            let (done, rest) = scratch.out.split_at_mut(l);
            let input: &[f64] = if l == 0 { &scratch.input } else { &done[l - 1] };
            layer.forward_into(input, &mut scratch.pre[l], &mut rest[0]);
        }
        scratch.pre[layers.len() - 1][0]
    }

    /// Click probabilities, each strictly inside (0, 1).
    pub fn forward(&self, batch: &[ClickSample], lookup: Lookup) -> Result<(Vec<f64>, usize)> {
        self.check_batch(batch)?;
        let slots = self.schema.slots();
        let mut scratch = Scratch::new(self.stack);
        let mut fresh = 0;
        let mut probs = Vec::with_capacity(batch.len());
        for sample in batch {
            fresh += self.gather(&slots, sample, lookup, &mut scratch.input)?;
            let z = self.run_stack(&mut scratch);
            probs.push(sigmoid(z).clamp(P_MIN, P_MAX));
        }
        Ok((probs, fresh))
    }

    /// Mean clipped cross-entropy of the batch and its exact gradient. With
    /// `soft`, each sample adds `weight * BCE(p; soft_target)`.
    pub fn backward(
        &self,
        batch: &[ClickSample],
        labels: &[u8],
        soft: Option<SoftTargets<'_>>,
        embedding_grads: bool,
    ) -> Result<(f64, Gradients)> {
        if labels.len() != batch.len() {
            return Err(ColfError::InvalidInput(format!(
                "{} labels for {} samples",
                labels.len(),
                batch.len()
            )));
        }
        if let Some(s) = soft {
            if s.probs.len() != batch.len() {
                return Err(ColfError::InvalidInput(format!(
                    "{} soft targets for {} samples",
                    s.probs.len(),
                    batch.len()
                )));
            }
        }
        if batch.is_empty() {
            return Err(ColfError::InvalidInput("empty batch".into()));
        }
        self.check_batch(batch)?;

        let slots = self.schema.slots();
        let layers = self.stack.layers();
        let n_layers = layers.len();
        let mut scratch = Scratch::new(self.stack);
        let mut grads = Gradients::zeros(self, embedding_grads);
        let mut total = 0.0;

        for (i, sample) in batch.iter().enumerate() {
            self.gather(&slots, sample, Lookup::Strict, &mut scratch.input)?;
            let z = self.run_stack(&mut scratch);
            let p = sigmoid(z);
            let y = f64::from(labels[i]);
            total += clipped_bce(p, y);
            let mut dz = if p > EPS_CLIP && p < 1.0 - EPS_CLIP { p - y } else { 0.0 };
            if let Some(s) = soft {
                let q = s.probs[i];
                total += s.weight * clipped_bce(p, q);
                if p > EPS_CLIP && p < 1.0 - EPS_CLIP {
                    dz += s.weight * (p - q);
                }
            }

            scratch.delta.clear();
            scratch.delta.push(dz);
            for l in (0..n_layers).rev() {
                let layer = &layers[l];
                if layer.activation == Activation::Relu {
                    for (d, &pre) in scratch.delta.iter_mut().zip(&scratch.pre[l]) {
                        if pre <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                let input: &[f64] = if l == 0 { &scratch.input } else { &scratch.out[l - 1] };
                let g = &mut grads.dense[l];
                for (o, &d) in scratch.delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.in_width..(o + 1) * layer.in_width];
                    for (gw, x) in row.iter_mut().zip(input) {
                        *gw += d * x;
                    }
                }
                if l == 0 && !embedding_grads {
                    break;
                }
                scratch.prev_delta.clear();
                scratch.prev_delta.resize(layer.in_width, 0.0);
                for (o, &d) in scratch.delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.in_width..(o + 1) * layer.in_width];
                    for (pd, w) in scratch.prev_delta.iter_mut().zip(row) {
                        *pd += d * w;
                    }
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.prev_delta);
            }

            if embedding_grads {
                let mut offset = 0;
                for (f, (table, slot)) in self.embeddings.iter().zip(&slots).enumerate() {
                    let dim = table.dim();
                    let row = table
                        .row_index(slot.id(sample))
                        .expect("gather already checked registration");
                    let acc = grads.embeddings[f].entry(row);
                    for (a, d) in acc.iter_mut().zip(&scratch.delta[offset..offset + dim]) {
                        *a += d;
                    }
                    offset += dim;
                }
            }
        }

        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        Ok((total * inv, grads))
    }

    /// Mean objective (hard labels plus optional soft term) without gradients.
    pub fn objective(&self, batch: &[ClickSample], labels: &[u8], soft: Option<SoftTargets<'_>>) -> Result<f64> {
        let (probs, _) = self.forward(batch, Lookup::Strict)?;
        if probs.is_empty() {
            return Err(ColfError::InvalidInput("empty batch".into()));
        }
        let mut total = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            total += clipped_bce(p, f64::from(labels[i]));
            if let Some(s) = soft {
                total += s.weight * clipped_bce(p, s.probs[i]);
            }
        }
        Ok(total / probs.len() as f64)
    }
}

/// Binary cross-entropy against a (possibly soft) target, with the prediction
/// clipped to `[EPS_CLIP, 1 - EPS_CLIP]`.
#[inline]
pub fn clipped_bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(EPS_CLIP, 1.0 - EPS_CLIP);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Mean clipped cross-entropy of hard labels.
pub fn logloss(preds: &[f64], labels: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(ColfError::InvalidInput(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(ColfError::InvalidInput("logloss of an empty set".into()));
    }
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| clipped_bce(p, f64::from(y)))
        .sum();
    Ok(total / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logloss_closed_forms() {
        let half = logloss(&[0.5], &[1]).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        let clipped = logloss(&[1.0], &[1]).unwrap();
        assert!((clipped - (-(1.0f64 - 1e-7).ln())).abs() < 1e-18);
        assert!(clipped > 0.0 && clipped < 1.1e-7);
        assert!(logloss(&[0.0], &[1]).unwrap().is_finite());
    }

    #[test]
    fn logloss_length_mismatch() {
        assert!(matches!(
            logloss(&[0.2, 0.3], &[1]),
            Err(ColfError::InvalidInput(_))
        ));
    }
}
