use serde::{Deserialize, Serialize};

use super::embedding::bits_eq;
use crate::error::{ColfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer; `weights` is row-major `(out_width, in_width)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_width: usize,
    pub out_width: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_width: usize, out_width: usize, activation: Activation) -> Self {
        Self {
            in_width,
            out_width,
            weights: vec![0.0; in_width * out_width],
            bias: vec![0.0; out_width],
            activation,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `out = act(W x + b)`; also writes the pre-activation into `pre`.
    #[inline]
    pub fn forward_into(&self, input: &[f64], pre: &mut [f64], out: &mut [f64]) {
        for o in 0..self.out_width {
            let row = &self.weights[o * self.in_width..(o + 1) * self.in_width];
            let mut z = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                z += w * x;
            }
            pre[o] = z;
            out[o] = match self.activation {
                Activation::Relu => z.max(0.0),
                Activation::Identity => z,
            };
        }
    }
}

/// Stack of dense layers ending in a single logit (sigmoid applied by the caller).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseStack {
    layers: Vec<DenseLayer>,
}

impl DenseStack {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(ColfError::InvalidConfig("dense stack has no layers".into()));
        };
        if last.out_width != 1 {
            return Err(ColfError::InvalidConfig(format!(
                "final layer must have width 1, got {}",
                last.out_width
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_width == 0 || layer.out_width == 0 {
                return Err(ColfError::InvalidConfig(format!("layer {i} has zero width")));
            }
            if layer.weights.len() != layer.in_width * layer.out_width
                || layer.bias.len() != layer.out_width
            {
                return Err(ColfError::InvalidConfig(format!(
                    "layer {i} storage does not match its widths"
                )));
            }
            if i > 0 && layers[i - 1].out_width != layer.in_width {
                return Err(ColfError::InvalidConfig(format!(
                    "layer {} outputs {} but layer {i} expects {}",
                    i - 1,
                    layers[i - 1].out_width,
                    layer.in_width
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.out_width).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::n_params).sum()
    }

    pub fn bits_eq(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.in_width == b.in_width
                    && a.out_width == b.out_width
                    && a.activation == b.activation
                    && bits_eq(&a.weights, &b.weights)
                    && bits_eq(&a.bias, &b.bias)
            })
    }
}

impl PartialEq for DenseStack {
    fn eq(&self, other: &Self) -> bool {
        self.bits_eq(other)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_must_compose() {
        let err = DenseStack::new(vec![
            DenseLayer::zeros(4, 3, Activation::Relu),
            DenseLayer::zeros(2, 1, Activation::Identity),
        ])
        .unwrap_err();
        assert!(matches!(err, ColfError::InvalidConfig(_)));
        assert!(DenseStack::new(vec![DenseLayer::zeros(4, 2, Activation::Identity)]).is_err());
        assert!(DenseStack::new(vec![]).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
