//! Drift diagnostics over a stream: catalog turnover, item-marginal KL and
//! the accuracy decay of a model frozen after one day.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::sample::Stream;
use crate::error::{ColfError, Result};
use crate::eval::{auc, kl_divergence};
use crate::models::{predict, register_new_ids, update_base, ModelSpec, TrainHyper};

/// Fraction of the items active on `day` that were not active on `base_day`.
pub fn new_item_fraction(stream: &Stream, base_day: u32, day: u32) -> Result<f64> {
    if base_day > day {
        return Err(ColfError::InvalidInput(format!(
            "base day {base_day} is after day {day}"
        )));
    }
    let base = stream.item_set(base_day)?;
    let now = stream.item_set(day)?;
    if now.is_empty() {
        return Ok(0.0);
    }
    let fresh = now.iter().filter(|v| base.binary_search(v).is_err()).count();
    Ok(fresh as f64 / now.len() as f64)
}

/// `KL(P_i || P_j)` between the additively smoothed empirical item
/// distributions of two days, over the union of items observed on either.
pub fn kl_item_dist(stream: &Stream, day_i: u32, day_j: u32, smoothing: f64) -> Result<f64> {
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(ColfError::InvalidInput(format!(
            "smoothing must be positive, got {smoothing}"
        )));
    }
    let count = |day: u32| -> Result<HashMap<u32, u64>> {
        let mut counts = HashMap::new();
        for s in &stream.day(day)?.samples {
            *counts.entry(s.item_id).or_insert(0) += 1;
        }
        Ok(counts)
    };
    let ci = count(day_i)?;
    let cj = count(day_j)?;
    let mut support: Vec<u32> = ci.keys().chain(cj.keys()).copied().collect();
    support.sort_unstable();
    support.dedup();
    let dist = |c: &HashMap<u32, u64>| -> Vec<f64> {
        let total: u64 = c.values().sum();
        let denom = total as f64 + smoothing * support.len() as f64;
        support
            .iter()
            .map(|v| (c.get(v).copied().unwrap_or(0) as f64 + smoothing) / denom)
            .collect()
    };
    kl_divergence(&dist(&ci), &dist(&cj))
}

/// Settings for [`drift_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub model: ModelSpec,
    pub train: TrainHyper,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            train: TrainHyper {
                epochs: 2,
                ..TrainHyper::default()
            },
            seed: 0,
        }
    }
}

/// Trains a fresh model on `train_day` alone and returns `(gap, auc)` on each
/// of `test_days`.
pub fn drift_probe(stream: &Stream, train_day: u32, test_days: &[u32], probe: &ProbeConfig) -> Result<Vec<(u32, f64)>> {
    let Some(&first_test) = test_days.iter().min() else {
        return Ok(Vec::new());
    };
    if train_day >= first_test {
        return Err(ColfError::InvalidInput(format!(
            "train day {train_day} must precede every test day (earliest {first_test})"
        )));
    }
    let train = stream.day(train_day)?;
    let mut model = probe.model.build(&stream.schema, probe.seed)?;
    register_new_ids(&mut model, &train.samples, probe.seed);
    let hyper = TrainHyper {
        seed: probe.seed,
        ..probe.train.clone()
    };
    update_base(&mut model, train, &hyper, train_day as u64)?;

    test_days
        .iter()
        .map(|&d| {
            let data = stream.day(d)?;
            let preds = predict(&model, &data.samples)?;
            Ok((d - train_day, auc(&preds, &data.labels())?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSchema;
    use crate::stream::{generate_stream, ClickSample, DayPartition, DriftConfig};

    fn two_item_stream(day1: &[(u32, usize)], day2: &[(u32, usize)]) -> Stream {
        let make = |day: u32, counts: &[(u32, usize)]| {
            let samples = counts
                .iter()
                .flat_map(|&(item, n)| (0..n).map(move |_| ClickSample::new(day, 0, item, &[], 0)))
                .collect();
            DayPartition::new(day, samples).unwrap()
        };
        Stream::new(
            FeatureSchema::ctr(0, 2).unwrap(),
            vec![make(1, day1), make(2, day2)],
        )
        .unwrap()
    }

    #[test]
    fn kl_of_a_day_with_itself_is_zero() {
        let s = two_item_stream(&[(1, 3), (2, 5)], &[(1, 1)]);
        assert_eq!(kl_item_dist(&s, 1, 1, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn kl_two_item_fixture() {
        // P = (0.5, 0.5), Q = (0.25, 0.75); a vanishing smoothing mass leaves
        // the closed form 0.5 ln 2 + 0.5 ln(2/3).
        let s = two_item_stream(&[(1, 2), (2, 2)], &[(1, 1), (2, 3)]);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((expected - 0.143_841).abs() < 1e-6);
        let got = kl_item_dist(&s, 1, 2, 1e-9).unwrap();
        assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn new_item_fraction_edge_cases() {
        let cfg = DriftConfig {
            n_days: 3,
            n_users: 20,
            catalog_size: 40,
            impressions_per_day: 200,
            churn_rate: 0.5,
            ..DriftConfig::desk(2)
        };
        let g = generate_stream(&cfg).unwrap();
        assert_eq!(new_item_fraction(&g.stream, 2, 2).unwrap(), 0.0);
        assert_eq!(new_item_fraction(&g.stream, 1, 2).unwrap(), 0.5);
        assert!(new_item_fraction(&g.stream, 2, 1).is_err());
        assert!(new_item_fraction(&g.stream, 1, 9).is_err());
    }

    #[test]
    fn probe_with_no_test_days_is_empty() {
        let cfg = DriftConfig {
            n_days: 2,
            n_users: 10,
            catalog_size: 10,
            impressions_per_day: 50,
            ..DriftConfig::desk(1)
        };
        let g = generate_stream(&cfg).unwrap();
        assert!(drift_probe(&g.stream, 1, &[], &ProbeConfig::default())
            .unwrap()
            .is_empty());
        assert!(drift_probe(&g.stream, 2, &[1], &ProbeConfig::default()).is_err());
    }
}
