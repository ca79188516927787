use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ColfError, Result};
use crate::memory::MemoryPolicyConfig;
use crate::models::{ModelSpec, TrainHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Base model plus memory-trained modular head.
    Colf,
    /// Base model only, updated once per day.
    Incremental,
    /// Head trained on the last `window_days` days verbatim.
    SlidingWindow,
    /// Head trained on a class-balancing reservoir.
    Cbrs,
    /// Head trained on a pool sampled by historical item frequency.
    AderFreq,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Colf => "colf",
            StrategyKind::Incremental => "incremental",
            StrategyKind::SlidingWindow => "sliding_window",
            StrategyKind::Cbrs => "cbrs",
            StrategyKind::AderFreq => "ader_freq",
        }
    }

    pub fn uses_memory(self) -> bool {
        self != StrategyKind::Incremental
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Switches that remove one component of the full method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    /// Replay trains every parameter of the base model itself, so the base
    /// model carries the replay updates into later days.
    pub no_modular: bool,
    pub no_old_discard: bool,
    pub no_relevant: bool,
    /// The head trains only on retained older memory; the day's data joins
    /// the memory after the head is trained.
    pub no_new: bool,
}

impl Ablations {
    pub fn any(&self) -> bool {
        self.no_modular || self.no_old_discard || self.no_relevant || self.no_new
    }

    pub fn suffix(&self) -> String {
        let mut parts = Vec::new();
        if self.no_modular {
            parts.push("no_modular");
        }
        if self.no_old_discard {
            parts.push("no_old_discard");
        }
        if self.no_relevant {
            parts.push("no_relevant");
        }
        if self.no_new {
            parts.push("no_new");
        }
        parts.join("+")
    }
}

fn default_lambda() -> f64 {
    1.0
}

fn default_window() -> usize {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Label used in results; derived from kind and ablations when absent.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub policy: MemoryPolicyConfig,
    /// Weight of the distillation term in head training.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub ablations: Ablations,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub base_train: TrainHyper,
    #[serde(default)]
    pub head_train: TrainHyper,
    #[serde(default = "default_window")]
    pub window_days: usize,
    /// Head training also updates the shared embedding tables, and the base
    /// model keeps those updates.
    #[serde(default)]
    pub head_trains_embeddings: bool,
    /// Seeds model initialization and every shuffle; the `seed` fields of the
    /// train settings are ignored.
    #[serde(default)]
    pub seed: u64,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            name: None,
            policy: MemoryPolicyConfig::default(),
            lambda: default_lambda(),
            ablations: Ablations::default(),
            model: ModelSpec::default(),
            base_train: TrainHyper::default(),
            head_train: TrainHyper::default(),
            window_days: default_window(),
            head_trains_embeddings: false,
            seed: 0,
        }
    }

    pub fn colf() -> Self {
        Self::new(StrategyKind::Colf)
    }

    pub fn with_ablations(mut self, ablations: Ablations) -> Self {
        self.ablations = ablations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        if self.ablations.any() {
            format!("{}-{}", self.kind, self.ablations.suffix())
        } else {
            self.kind.to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ablations.any() && self.kind != StrategyKind::Colf {
            return Err(ColfError::InvalidConfig(format!(
                "ablation flags only apply to colf, not {}",
                self.kind
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ColfError::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.kind == StrategyKind::SlidingWindow && self.window_days == 0 {
            return Err(ColfError::InvalidConfig("window_days must be positive".into()));
        }
        self.policy.validate()?;
        self.base_train.validate()?;
        self.head_train.validate()
    }

    pub(crate) fn base_hyper(&self) -> TrainHyper {
        TrainHyper {
            seed: self.seed,
            ..self.base_train.clone()
        }
    }

    pub(crate) fn head_hyper(&self) -> TrainHyper {
        TrainHyper {
            seed: self.seed,
            ..self.head_train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablations_only_with_colf() {
        let bad = StrategyConfig::new(StrategyKind::Cbrs).with_ablations(Ablations {
            no_new: true,
            ..Default::default()
        });
        assert!(matches!(bad.validate(), Err(ColfError::InvalidConfig(_))));
        assert!(StrategyConfig::colf()
            .with_ablations(Ablations {
                no_new: true,
                ..Default::default()
            })
            .validate()
            .is_ok());
    }

    #[test]
    fn labels() {
        assert_eq!(StrategyConfig::colf().label(), "colf");
        let abl = StrategyConfig::colf().with_ablations(Ablations {
            no_modular: true,
            ..Default::default()
        });
        assert_eq!(abl.label(), "colf-no_modular");
    }
}
