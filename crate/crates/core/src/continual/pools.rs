//! Flat replay pools used by the baseline strategies.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::{rng_for, tag};
use crate::stream::ClickSample;

/// Class-balancing reservoir. Under capacity everything is stored; once full,
/// a sample of a minority class evicts a random member of the largest class,
/// while a sample of the largest class enters with its class's reservoir
/// probability and evicts a random member of its own class.
#[derive(Debug, Clone)]
pub struct CbrsPool {
    cap: usize,
    samples: Vec<ClickSample>,
    slots: [Vec<usize>; 2],
    seen: [u64; 2],
    rng: ChaCha8Rng,
}

impl CbrsPool {
    pub fn new(cap: usize, seed: u64) -> Self {
        assert!(cap > 0, "reservoir capacity must be positive");
        Self {
            cap,
            samples: Vec::with_capacity(cap.min(1 << 20)),
            slots: [Vec::new(), Vec::new()],
            seen: [0, 0],
            rng: rng_for(&[seed, tag::RESERVOIR]),
        }
    }

    pub fn samples(&self) -> &[ClickSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        [self.slots[0].len(), self.slots[1].len()]
    }

    fn replace_from(&mut self, victim_class: usize, sample: ClickSample) {
        let pick = self.rng.gen_range(0..self.slots[victim_class].len());
        let slot = self.slots[victim_class].swap_remove(pick);
        let class = sample.label as usize;
        self.samples[slot] = sample;
        self.slots[class].push(slot);
    }

    pub fn offer(&mut self, sample: ClickSample) {
        let class = (sample.label as usize).min(1);
        self.seen[class] += 1;
        if self.samples.len() < self.cap {
            self.slots[class].push(self.samples.len());
            self.samples.push(sample);
            return;
        }
        let other = 1 - class;
        if self.slots[class].len() < self.slots[other].len() {
            self.replace_from(other, sample);
        } else {
            let accept = self.slots[class].len() as f64 / self.seen[class] as f64;
            if self.rng.gen::<f64>() < accept {
                self.replace_from(class, sample);
            }
        }
    }

    pub fn update(&mut self, data: &[ClickSample]) {
        for s in data {
            self.offer(s.clone());
        }
    }
}

/// Convenience wrapper: a fresh reservoir fed with `data`.
pub fn cbrs_update(pool: &mut CbrsPool, data: &[ClickSample]) {
    pool.update(data);
}

/// Pool refilled each day by weighted sampling without replacement from the
/// old pool plus the new day, each exemplar weighted by the cumulative
/// historical frequency of its item.
#[derive(Debug, Clone)]
pub struct AderPool {
    cap: usize,
    seed: u64,
    samples: Vec<ClickSample>,
    freq: HashMap<u32, u64>,
}

impl AderPool {
    pub fn new(cap: usize, seed: u64) -> Self {
        assert!(cap > 0, "pool capacity must be positive");
        Self {
            cap,
            seed,
            samples: Vec::new(),
            freq: HashMap::new(),
        }
    }

    pub fn samples(&self) -> &[ClickSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn frequency(&self, item: u32) -> u64 {
        self.freq.get(&item).copied().unwrap_or(0)
    }

    /// `salt` keys the day's sampling stream.
    pub fn update(&mut self, data: &[ClickSample], salt: u64) {
        for s in data {
            *self.freq.entry(s.item_id).or_insert(0) += 1;
        }
        let mut candidates = std::mem::take(&mut self.samples);
        candidates.extend_from_slice(data);
        if candidates.len() <= self.cap {
            self.samples = candidates;
            return;
        }
        // Efraimidis-Spirakis: keep the `cap` largest ln(u) / w.
        let mut rng = rng_for(&[self.seed, tag::ADER, salt]);
        let mut keyed: Vec<(f64, usize)> = candidates
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let w = self.frequency(s.item_id).max(1) as f64;
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                (u.ln() / w, i)
            })
            .collect();
        keyed.select_nth_unstable_by(self.cap - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut keep: Vec<usize> = keyed[..self.cap].iter().map(|&(_, i)| i).collect();
        keep.sort_unstable();
        self.samples = keep.into_iter().map(|i| candidates[i].clone()).collect();
    }
}

pub fn ader_freq_update(pool: &mut AderPool, data: &[ClickSample], salt: u64) {
    pool.update(data, salt);
}
