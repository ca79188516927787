use serde::{Deserialize, Serialize};

use super::dense::DenseStack;
use super::embedding::EmbeddingTable;
use super::network::Gradients;
use crate::error::{ColfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ColfError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.kind == OptimizerKind::Adam
            && !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0)
        {
            return Err(ColfError::InvalidConfig("adam needs beta1, beta2 in [0,1) and eps > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn ensure(&mut self, len: usize) {
        if self.m.len() < len {
            self.m.resize(len, 0.0);
            self.v.resize(len, 0.0);
        }
    }
}

/// Optimizer state. Adam moments mirror the parameters: one pair per dense
/// tensor and one per embedding table (grown as tables grow). Embedding
/// moments only advance for rows present in the gradient.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step: u64,
    dense: Vec<(Moments, Moments)>,
    embeddings: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            dense: Vec::new(),
            embeddings: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn check_shapes(&self, tables: &[EmbeddingTable], stack: &DenseStack, grads: &Gradients) -> Result<()> {
        let layers = stack.layers();
        if grads.dense.len() != layers.len() {
            return Err(ColfError::InvalidInput(format!(
                "gradient has {} dense layers, model has {}",
                grads.dense.len(),
                layers.len()
            )));
        }
        for (l, (g, layer)) in grads.dense.iter().zip(layers).enumerate() {
            if g.weights.len() != layer.weights.len() || g.bias.len() != layer.bias.len() {
                return Err(ColfError::InvalidInput(format!("dense layer {l} gradient shape mismatch")));
            }
        }
        if !grads.embeddings.is_empty() {
            if grads.embeddings.len() != tables.len() {
                return Err(ColfError::InvalidInput(format!(
                    "gradient has {} embedding tables, model has {}",
                    grads.embeddings.len(),
                    tables.len()
                )));
            }
            for (g, t) in grads.embeddings.iter().zip(tables) {
                if g.dim() != t.dim() || g.iter().any(|(r, _)| r >= t.len()) {
                    return Err(ColfError::InvalidInput(format!(
                        "embedding gradient for '{}' does not match the table",
                        t.field_name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// One descent step. Embedding tables are written only when `grads`
    /// carries embedding rows, and then only at those rows.
    pub fn apply(&mut self, tables: &mut [EmbeddingTable], stack: &mut DenseStack, grads: &Gradients) -> Result<()> {
        self.check_shapes(tables, stack, grads)?;
        self.step += 1;
        let cfg = self.config;
        match cfg.kind {
            OptimizerKind::Sgd => {
                let lr = cfg.learning_rate;
                for (layer, g) in stack.layers_mut().iter_mut().zip(&grads.dense) {
                    sgd(&mut layer.weights, &g.weights, lr);
                    sgd(&mut layer.bias, &g.bias, lr);
                }
                for (table, g) in tables.iter_mut().zip(&grads.embeddings) {
                    for (row, gr) in g.iter() {
                        sgd(table.row_at_mut(row), gr, lr);
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let adam = AdamStep {
                    lr: cfg.learning_rate,
                    b1: cfg.beta1,
                    b2: cfg.beta2,
                    eps: cfg.eps,
                    bc1: 1.0 - cfg.beta1.powi(t),
                    bc2: 1.0 - cfg.beta2.powi(t),
                };
                let layers = stack.layers_mut();
                if self.dense.len() != layers.len() {
                    self.dense = vec![Default::default(); layers.len()];
                }
                for ((layer, g), (mw, mb)) in layers.iter_mut().zip(&grads.dense).zip(&mut self.dense) {
                    mw.ensure(layer.weights.len());
                    mb.ensure(layer.bias.len());
                    adam.apply(&mut layer.weights, &g.weights, &mut mw.m, &mut mw.v);
                    adam.apply(&mut layer.bias, &g.bias, &mut mb.m, &mut mb.v);
                }
                if !grads.embeddings.is_empty() {
                    if self.embeddings.len() != tables.len() {
                        self.embeddings = vec![Default::default(); tables.len()];
                    }
                    for ((table, g), mom) in tables.iter_mut().zip(&grads.embeddings).zip(&mut self.embeddings) {
                        let dim = table.dim();
                        mom.ensure(table.data().len());
                        for (row, gr) in g.iter() {
                            let span = row * dim..(row + 1) * dim;
                            adam.apply(
                                table.row_at_mut(row),
                                gr,
                                &mut mom.m[span.clone()],
                                &mut mom.v[span],
                            );
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn sgd(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

struct AdamStep {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

impl AdamStep {
    #[inline]
    fn apply(&self, params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64]) {
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
            *m = self.b1 * *m + (1.0 - self.b1) * g;
            *v = self.b2 * *v + (1.0 - self.b2) * g * g;
            let m_hat = *m / self.bc1;
            let v_hat = *v / self.bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::{Activation, DenseLayer};
    use crate::nn::network::LayerGrad;

    fn one_weight(p: f64) -> DenseStack {
        let mut layer = DenseLayer::zeros(1, 1, Activation::Identity);
        layer.weights[0] = p;
        DenseStack::new(vec![layer]).unwrap()
    }

    fn grad(g: f64) -> Gradients {
        Gradients {
            dense: vec![LayerGrad {
                weights: vec![g],
                bias: vec![0.0],
            }],
            embeddings: vec![],
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let mut stack = one_weight(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1)).unwrap();
        opt.apply(&mut [], &mut stack, &grad(0.5)).unwrap();
        assert!((stack.layers()[0].weights[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_fixed_point() {
        let mut stack = one_weight(0.123_456_789);
        let before = stack.clone();
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1)).unwrap();
        opt.apply(&mut [], &mut stack, &grad(0.0)).unwrap();
        assert!(stack.bits_eq(&before));
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        // m = 0.05, v = 2.5e-4; bias-corrected m_hat = 0.5, v_hat = 0.25,
        // step = 0.01 * 0.5 / (0.5 + 1e-8).
        let mut stack = one_weight(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.01)).unwrap();
        opt.apply(&mut [], &mut stack, &grad(0.5)).unwrap();
        let expected = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
        let got = stack.layers()[0].weights[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((1.0 - got - 0.01).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut stack = one_weight(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1)).unwrap();
        let bad = Gradients {
            dense: vec![LayerGrad {
                weights: vec![0.1, 0.2],
                bias: vec![0.0],
            }],
            embeddings: vec![],
        };
        assert!(matches!(
            opt.apply(&mut [], &mut stack, &bad),
            Err(ColfError::InvalidInput(_))
        ));
    }

    #[test]
    fn non_positive_learning_rate_is_invalid() {
        assert!(OptimizerState::new(OptimizerConfig::sgd(0.0)).is_err());
    }
}
