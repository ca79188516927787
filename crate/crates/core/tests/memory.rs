use std::collections::BTreeMap;

use colf::memory::{update, FrequencyEstimator, MemoryPolicyConfig, MemoryStore, UpdateSteps};
use colf::{ClickSample, DayPartition};
use proptest::prelude::*;

fn counts<'a>(items: impl IntoIterator<Item = &'a ClickSample>) -> BTreeMap<&'a ClickSample, i64> {
    let mut m = BTreeMap::new();
    for s in items {
        *m.entry(s).or_insert(0) += 1;
    }
    m
}

fn samples(day: u32, items: &[u32]) -> Vec<ClickSample> {
    items
        .iter()
        .enumerate()
        .map(|(i, &v)| ClickSample::new(day, i as u32 % 5, v, &[0], (v % 3 == 0) as u8))
        .collect()
}

prop_compose! {
    fn scenario()(
        parts in prop::collection::vec(prop::collection::vec(0u32..12, 1..20), 0..6),
        new in prop::collection::vec(0u32..12, 1..25),
        score_seed in prop::collection::vec(0.5f64..0.8, 6),
        latest in 0.5f64..0.8,
        epsilon in 0.0f64..0.1,
        epsilon_p in 0.0f64..0.2,
        cap in 1usize..80,
        steps in (any::<bool>(), any::<bool>(), any::<bool>()),
        seed in any::<u64>(),
    ) -> (MemoryStore, BTreeMap<u32, f64>, f64, DayPartition, MemoryPolicyConfig, UpdateSteps, u64) {
        let memory = MemoryStore::from_partitions(
            parts.iter().enumerate().map(|(d, items)| (d as u32 + 1, samples(d as u32 + 1, items))),
        )
        .unwrap();
        let scores = (1..=parts.len() as u32).map(|d| (d, score_seed[d as usize - 1])).collect();
        let day = parts.len() as u32 + 1;
        let data = DayPartition::new(day, samples(day, &new)).unwrap();
        let policy = MemoryPolicyConfig { epsilon, epsilon_p, cap, ..Default::default() };
        let steps = UpdateSteps { discard_old: steps.0, refresh_relevant: steps.1, append_new: steps.2 };
        (memory, scores, latest, data, policy, steps, seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn update_algebra((mut memory, scores, latest, data, policy, steps, seed) in scenario()) {
        let (report, delta) = update(&mut memory, &scores, latest, &data, &policy, steps, seed).unwrap();

        let mut expected = counts(delta.before.iter());
        for s in delta.old.iter().chain(&delta.irrelevant) {
            let c = expected.get_mut(s).expect("removed sample was in memory");
            *c -= 1;
            prop_assert!(*c >= 0);
        }
        for s in &delta.appended {
            *expected.entry(s).or_insert(0) += 1;
        }
        expected.retain(|_, c| *c != 0);
        prop_assert_eq!(&expected, &counts(delta.pre_cap.iter()));

        for (d, _) in delta.old.partitions() {
            prop_assert!(latest - scores[&d] > policy.epsilon);
        }
        if steps.discard_old {
            for (d, _) in delta.pre_cap.partitions() {
                if d != data.day {
                    prop_assert!(latest - scores[&d] <= policy.epsilon);
                }
            }
        } else {
            prop_assert!(delta.old.is_empty());
        }
        let est = FrequencyEstimator::fit(&data).unwrap();
        prop_assert!(delta.irrelevant.iter().all(|s| est.prob(s.item_id) < policy.epsilon_p));
        if steps.refresh_relevant {
            prop_assert!(delta
                .pre_cap
                .partitions()
                .filter(|(d, _)| *d != data.day)
                .all(|(_, p)| p.iter().all(|s| est.prob(s.item_id) >= policy.epsilon_p)));
        }
        if steps.append_new {
            prop_assert_eq!(delta.pre_cap.partition(data.day).unwrap(), &data.samples[..]);
        } else {
            prop_assert!(delta.appended.is_empty());
        }

        prop_assert!(memory.len() <= policy.cap);
        let pre = counts(delta.pre_cap.iter());
        for (s, c) in counts(memory.iter()) {
            prop_assert!(pre.get(s).copied().unwrap_or(0) >= c);
        }
        let kept = memory.days();
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        for (d, part) in memory.partitions() {
            prop_assert!(!part.is_empty());
            prop_assert!(part.iter().all(|s| s.day == d));
        }
        // Only the oldest partitions are evicted, so what survives is a suffix.
        let pre_days = delta.pre_cap.days();
        prop_assert!(pre_days.ends_with(&kept));

        prop_assert_eq!(report.total_size, memory.len());
        prop_assert_eq!(report.n_partitions, memory.n_partitions());
        prop_assert_eq!(report.cap_truncated, delta.pre_cap.len() - memory.len());
        prop_assert_eq!(report.dropped_irrelevant, delta.irrelevant.len());
        prop_assert_eq!(report.discarded_days, delta.old.days());
    }

    #[test]
    fn cap_is_deterministic((memory, _s, _l, data, policy, _st, seed) in scenario()) {
        let mut a = memory.clone();
        let mut b = memory;
        a.append_new(&data).unwrap();
        b.append_new(&data).unwrap();
        a.enforce_cap(policy.cap, seed);
        b.enforce_cap(policy.cap, seed);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn oversized_day_is_subsampled_in_order() {
    let items: Vec<u32> = (0..100).collect();
    let data = DayPartition::new(3, samples(3, &items)).unwrap();
    let mut m = MemoryStore::new();
    m.append_new(&data).unwrap();
    assert_eq!(m.enforce_cap(30, 9), 70);
    let kept: Vec<u32> = m.iter().map(|s| s.item_id).collect();
    assert_eq!(kept.len(), 30);
    assert!(kept.windows(2).all(|w| w[0] < w[1]));
}
