//! Synthetic click stream with item-catalog churn, drifting item popularity
//! and a drifting ground-truth click function.
//!
//! Each item, user and context value owns a latent vector. For an impression
//! `(u, v, c)` the feature map is
//!
//! ```text
//! phi = [ v ; u ; u*v ; c_1*v ; ... ; c_k*v ]      (elementwise products)
//! ```
//!
//! and the true click probability on day `t` is `sigmoid(a * <w_t, phi> + b)`
//! where `w_t` is a unit vector doing a normalized Gaussian random walk.
//! `(a, b)` are fixed once on day 1 so the logit has standard deviation
//! `signal_scale` and the mean click probability matches `base_ctr`.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::sample::{ClickSample, DayPartition, Stream};
use crate::error::{ColfError, Result};
use crate::nn::sigmoid;
use crate::rng::{rng_for, tag};
use crate::schema::FeatureSchema;

/// Embedding width written into the stream header.
pub const STREAM_SCHEMA_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default = "defaults::n_days")]
    pub n_days: u32,
    #[serde(default = "defaults::n_users")]
    pub n_users: u32,
    #[serde(default = "defaults::catalog_size")]
    pub catalog_size: u32,
    /// Fraction of the active catalog replaced by brand-new items each day.
    #[serde(default = "defaults::churn_rate")]
    pub churn_rate: f64,
    #[serde(default = "defaults::impressions_per_day")]
    pub impressions_per_day: usize,
    #[serde(default = "defaults::latent_dim")]
    pub latent_dim: usize,
    /// Random-walk step of the ground-truth weight vector.
    #[serde(default = "defaults::drift_step")]
    pub drift_step: f64,
    /// Zipf exponent over today's popularity ranking.
    #[serde(default = "defaults::popularity_skew")]
    pub popularity_skew: f64,
    /// Daily random-walk step of the per-item popularity scores that define
    /// the ranking.
    #[serde(default = "defaults::popularity_drift")]
    pub popularity_drift: f64,
    #[serde(default = "defaults::base_ctr")]
    pub base_ctr: f64,
    /// Standard deviation of the true logit on day 1.
    #[serde(default = "defaults::signal_scale")]
    pub signal_scale: f64,
    /// Cardinality of each context field.
    #[serde(default = "defaults::context_cardinalities")]
    pub context_cardinalities: Vec<u32>,
    pub seed: u64,
}

mod defaults {
    pub fn n_days() -> u32 {
        30
    }
    pub fn n_users() -> u32 {
        2000
    }
    pub fn catalog_size() -> u32 {
        3000
    }
    pub fn churn_rate() -> f64 {
        0.03
    }
    pub fn impressions_per_day() -> usize {
        50_000
    }
    pub fn latent_dim() -> usize {
        4
    }
    pub fn drift_step() -> f64 {
        0.05
    }
    pub fn popularity_skew() -> f64 {
        0.8
    }
    pub fn popularity_drift() -> f64 {
        0.3
    }
    pub fn base_ctr() -> f64 {
        0.10
    }
    pub fn signal_scale() -> f64 {
        1.5
    }
    pub fn context_cardinalities() -> Vec<u32> {
        vec![4]
    }
}

impl DriftConfig {
    /// Desk-scale defaults: 30 days, 2000 users, 3000 items, 3% daily churn,
    /// step 0.05, 50k impressions per day, 10% mean click rate.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_days: defaults::n_days(),
            n_users: defaults::n_users(),
            catalog_size: defaults::catalog_size(),
            churn_rate: defaults::churn_rate(),
            impressions_per_day: defaults::impressions_per_day(),
            latent_dim: defaults::latent_dim(),
            drift_step: defaults::drift_step(),
            popularity_skew: defaults::popularity_skew(),
            popularity_drift: defaults::popularity_drift(),
            base_ctr: defaults::base_ctr(),
            signal_scale: defaults::signal_scale(),
            context_cardinalities: defaults::context_cardinalities(),
            seed,
        }
    }

    /// The desk config with every drift source switched off: no churn, no
    /// click-function drift and a frozen popularity ranking.
    pub fn stationary(seed: u64) -> Self {
        Self {
            churn_rate: 0.0,
            drift_step: 0.0,
            popularity_drift: 0.0,
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(ColfError::InvalidConfig(msg));
        if self.n_days == 0 {
            return fail("n_days must be positive".into());
        }
        if self.n_users == 0 {
            return fail("n_users must be positive".into());
        }
        if self.catalog_size == 0 {
            return fail("catalog_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.churn_rate) {
            return fail(format!("churn_rate must be in [0,1], got {}", self.churn_rate));
        }
        if self.impressions_per_day == 0 {
            return fail("impressions_per_day must be positive".into());
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be positive".into());
        }
        if !(self.drift_step >= 0.0 && self.drift_step.is_finite()) {
            return fail(format!("drift_step must be >= 0, got {}", self.drift_step));
        }
        if !(self.popularity_skew >= 0.0 && self.popularity_skew.is_finite()) {
            return fail(format!("popularity_skew must be >= 0, got {}", self.popularity_skew));
        }
        if !(self.popularity_drift >= 0.0 && self.popularity_drift.is_finite()) {
            return fail(format!("popularity_drift must be >= 0, got {}", self.popularity_drift));
        }
        if !(self.base_ctr > 0.0 && self.base_ctr < 1.0) {
            return fail(format!("base_ctr must be in (0,1), got {}", self.base_ctr));
        }
        if !(self.signal_scale >= 0.0 && self.signal_scale.is_finite()) {
            return fail(format!("signal_scale must be >= 0, got {}", self.signal_scale));
        }
        if self.context_cardinalities.contains(&0) {
            return fail("context cardinalities must be positive".into());
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::ctr(self.context_cardinalities.len(), STREAM_SCHEMA_DIM)
    }

    fn phi_width(&self) -> usize {
        self.latent_dim * (3 + self.context_cardinalities.len())
    }
}

/// Hidden state of the simulated world on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub day: u32,
    /// Active item ids, in catalog slot order.
    pub active: Vec<u32>,
    /// Unit-norm ground-truth weight vector.
    pub weights: Vec<f64>,
    pub logit_scale: f64,
    pub logit_bias: f64,
}

/// A generated stream plus the world state of every day.
#[derive(Debug, Clone)]
pub struct Generated {
    pub stream: Stream,
    pub trace: Vec<WorldState>,
}

struct World<'a> {
    config: &'a DriftConfig,
    user_latent: Vec<f64>,
    context_latent: Vec<Vec<f64>>,
    item_latent: Vec<f64>,
    popularity: Vec<f64>,
    active: Vec<u32>,
    weights: Vec<f64>,
    scale: f64,
    bias: f64,
    zipf_cdf: Vec<f64>,
}

fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl<'a> World<'a> {
    fn new(config: &'a DriftConfig) -> Self {
        let d = config.latent_dim;
        let seed = config.seed;
        let mut rng = rng_for(&[seed, tag::LATENT, 0]);
        let user_latent = gaussian_vec(&mut rng, config.n_users as usize * d);
        let context_latent = config
            .context_cardinalities
            .iter()
            .enumerate()
            .map(|(k, &card)| {
                let mut rng = rng_for(&[seed, tag::LATENT, 1 + k as u64]);
                gaussian_vec(&mut rng, card as usize * d)
            })
            .collect();
        let mut weights = gaussian_vec(&mut rng_for(&[seed, tag::DRIFT, 0]), config.phi_width());
        normalize(&mut weights);

        let n = config.catalog_size as usize;
        let mut zipf_cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 1..=n {
            acc += (r as f64).powf(-config.popularity_skew);
            zipf_cdf.push(acc);
        }
        zipf_cdf.iter_mut().for_each(|c| *c /= acc);

        let mut world = Self {
            config,
            user_latent,
            context_latent,
            item_latent: Vec::new(),
            popularity: Vec::new(),
            active: Vec::with_capacity(n),
            weights,
            scale: 1.0,
            bias: 0.0,
            zipf_cdf,
        };
        for _ in 0..n {
            let id = world.new_item();
            world.active.push(id);
        }
        world
    }

    /// Creates the next item id with its own latent vector and popularity.
    fn new_item(&mut self) -> u32 {
        let id = self.popularity.len() as u32;
        let mut rng = rng_for(&[self.config.seed, tag::LATENT, 1000 + id as u64]);
        self.item_latent
            .extend(gaussian_vec(&mut rng, self.config.latent_dim));
        self.popularity.push(rng.sample::<f64, _>(StandardNormal));
        id
    }

    fn raw_score(&self, user: u32, item: u32, ctx: &[u32]) -> f64 {
        let d = self.config.latent_dim;
        let u = &self.user_latent[user as usize * d..(user as usize + 1) * d];
        let v = &self.item_latent[item as usize * d..(item as usize + 1) * d];
        let w = &self.weights;
        let mut s = 0.0;
        for k in 0..d {
            s += w[k] * v[k] + w[d + k] * u[k] + w[2 * d + k] * u[k] * v[k];
        }
        for (j, &c) in ctx.iter().enumerate() {
            let cl = &self.context_latent[j][c as usize * d..(c as usize + 1) * d];
            let wj = &w[(3 + j) * d..(4 + j) * d];
            for k in 0..d {
                s += wj[k] * cl[k] * v[k];
            }
        }
        s
    }

    fn churn(&mut self, day: u32) {
        let n = self.active.len();
        let replace = (self.config.churn_rate * n as f64).floor() as usize;
        if replace == 0 {
            return;
        }
        let mut rng = rng_for(&[self.config.seed, tag::CHURN, day as u64]);
        let mut slots = index::sample(&mut rng, n, replace).into_vec();
        slots.sort_unstable();
        for slot in slots {
            let id = self.new_item();
            self.active[slot] = id;
        }
    }

    fn drift(&mut self, day: u32) {
        let eta = self.config.drift_step;
        if eta > 0.0 {
            let mut rng = rng_for(&[self.config.seed, tag::DRIFT, day as u64]);
            for w in self.weights.iter_mut() {
                *w += eta * rng.sample::<f64, _>(StandardNormal);
            }
            normalize(&mut self.weights);
        }
        let pd = self.config.popularity_drift;
        if pd > 0.0 {
            let mut rng = rng_for(&[self.config.seed, tag::POPULARITY, day as u64]);
            for p in self.popularity.iter_mut() {
                *p += pd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    /// Today's ranking of active items, most popular first.
    fn ranking(&self) -> Vec<u32> {
        let mut ranked = self.active.clone();
        ranked.sort_by(|&a, &b| {
            self.popularity[b as usize]
                .total_cmp(&self.popularity[a as usize])
                .then(a.cmp(&b))
        });
        ranked
    }

    fn draw_impressions(&self, day: u32) -> Vec<(u32, u32, Vec<u32>, f64)> {
        let cfg = self.config;
        let ranked = self.ranking();
        let mut rng = rng_for(&[cfg.seed, tag::SAMPLE, day as u64]);
        (0..cfg.impressions_per_day)
            .map(|_| {
                let user = rng.gen_range(0..cfg.n_users);
                let u: f64 = rng.gen();
                let rank = self.zipf_cdf.partition_point(|&c| c < u).min(ranked.len() - 1);
                let item = ranked[rank];
                let ctx: Vec<u32> = cfg
                    .context_cardinalities
                    .iter()
                    .map(|&card| rng.gen_range(0..card))
                    .collect();
                let coin: f64 = rng.gen();
                (user, item, ctx, coin)
            })
            .collect()
    }

    /// Fixes `(scale, bias)` from the day-1 impressions.
    fn calibrate(&mut self, impressions: &[(u32, u32, Vec<u32>, f64)]) {
        let scores: Vec<f64> = impressions
            .iter()
            .map(|(u, v, c, _)| self.raw_score(*u, *v, c))
            .collect();
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        self.scale = if var > 0.0 {
            self.config.signal_scale / var.sqrt()
        } else {
            0.0
        };
        let target = self.config.base_ctr;
        let mean_ctr = |b: f64| scores.iter().map(|s| sigmoid(self.scale * s + b)).sum::<f64>() / n;
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_ctr(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.bias = 0.5 * (lo + hi);
    }

    fn click_prob(&self, user: u32, item: u32, ctx: &[u32]) -> f64 {
        sigmoid(self.scale * self.raw_score(user, item, ctx) + self.bias)
    }

    fn state(&self, day: u32) -> WorldState {
        WorldState {
            day,
            active: self.active.clone(),
            weights: self.weights.clone(),
            logit_scale: self.scale,
            logit_bias: self.bias,
        }
    }
}

/// Generates `config.n_days` days starting at day 1. Day 1 uses the initial
/// catalog; each later day first churns the catalog and advances the drift,
/// then samples impressions and labels.
pub fn generate_stream(config: &DriftConfig) -> Result<Generated> {
    config.validate()?;
    let schema = config.schema()?;
    let mut world = World::new(config);
    let mut days = Vec::with_capacity(config.n_days as usize);
    let mut trace = Vec::with_capacity(config.n_days as usize);

    for day in 1..=config.n_days {
        if day > 1 {
            world.churn(day);
            world.drift(day);
        }
        let impressions = world.draw_impressions(day);
        if day == 1 {
            world.calibrate(&impressions);
        }
        let samples = impressions
            .into_iter()
            .map(|(user, item, ctx, coin)| {
                let label = u8::from(coin < world.click_prob(user, item, &ctx));
                ClickSample::new(day, user, item, &ctx, label)
            })
            .collect();
        days.push(DayPartition { day, samples });
        trace.push(world.state(day));
    }

    let catalog = trace.iter().map(|s| s.active.clone()).collect();
    let mut stream = Stream::new(schema, days)?;
    stream.catalog = Some(catalog);
    Ok(Generated { stream, trace })
}

/// Ground-truth click probability of `sample` under the world state of its day.
pub fn true_click_prob(config: &DriftConfig, trace: &[WorldState], sample: &ClickSample) -> Result<f64> {
    true_click_probs(config, trace, std::slice::from_ref(sample)).map(|p| p[0])
}

/// [`true_click_prob`] for many samples, rebuilding the world only once.
pub fn true_click_probs(config: &DriftConfig, trace: &[WorldState], samples: &[ClickSample]) -> Result<Vec<f64>> {
    let mut world = World::new(config);
    let max_item = trace
        .iter()
        .flat_map(|s| s.active.iter().copied())
        .chain(samples.iter().map(|s| s.item_id))
        .max()
        .unwrap_or(0);
    while (world.popularity.len() as u32) <= max_item {
        world.new_item();
    }
    let mut current: Option<u32> = None;
    samples
        .iter()
        .map(|sample| {
            if current != Some(sample.day) {
                let state = trace
                    .iter()
                    .find(|s| s.day == sample.day)
                    .ok_or_else(|| ColfError::InvalidInput(format!("no world state for day {}", sample.day)))?;
                world.weights = state.weights.clone();
                world.scale = state.logit_scale;
                world.bias = state.logit_bias;
                current = Some(sample.day);
            }
            Ok(world.click_prob(sample.user_id, sample.item_id, &sample.context_ids))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> DriftConfig {
        DriftConfig {
            n_days: 4,
            n_users: 50,
            catalog_size: 40,
            impressions_per_day: 500,
            ..DriftConfig::desk(seed)
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_stream(&tiny(3)).unwrap();
        let b = generate_stream(&tiny(3)).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.trace, b.trace);
        let c = generate_stream(&tiny(4)).unwrap();
        assert_ne!(a.stream, c.stream);
    }

    #[test]
    fn catalog_size_is_preserved_and_weights_unit_norm() {
        let cfg = DriftConfig {
            churn_rate: 0.25,
            ..tiny(1)
        };
        let g = generate_stream(&cfg).unwrap();
        for s in &g.trace {
            assert_eq!(s.active.len(), 40);
            let norm: f64 = s.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        for d in &g.stream.days {
            assert_eq!(d.len(), 500);
            assert!(d.samples.iter().all(|s| s.day == d.day && s.label <= 1));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            DriftConfig { churn_rate: 1.5, ..tiny(1) },
            DriftConfig { drift_step: -0.1, ..tiny(1) },
            DriftConfig { base_ctr: 1.0, ..tiny(1) },
            DriftConfig { catalog_size: 0, ..tiny(1) },
        ] {
            assert!(matches!(generate_stream(&bad), Err(ColfError::InvalidConfig(_))));
        }
    }

    #[test]
    fn stationary_world_does_not_move() {
        let g = generate_stream(&DriftConfig {
            n_days: 5,
            ..DriftConfig::stationary(9)
        }.clone_small())
        .unwrap();
        for s in &g.trace[1..] {
            assert_eq!(s.active, g.trace[0].active);
            assert_eq!(s.weights, g.trace[0].weights);
        }
    }

    #[test]
    fn labels_follow_true_probabilities() {
        let cfg = tiny(5);
        let g = generate_stream(&cfg).unwrap();
        let day = &g.stream.days[2];
        let expected: f64 = day
            .samples
            .iter()
            .map(|s| true_click_prob(&cfg, &g.trace, s).unwrap())
            .sum::<f64>()
            / day.len() as f64;
        assert!((expected - day.click_rate()).abs() < 0.05);
    }

    impl DriftConfig {
        fn clone_small(&self) -> Self {
            Self {
                n_users: 50,
                catalog_size: 40,
                impressions_per_day: 300,
                ..self.clone()
            }
        }
    }
}
