use std::collections::BTreeSet;

use colf::stream::{kl_item_dist, new_item_fraction, read_stream_from, true_click_probs, write_stream_to};
use colf::{generate_stream, DriftConfig};

fn small(seed: u64) -> DriftConfig {
    DriftConfig {
        n_days: 8,
        n_users: 200,
        catalog_size: 300,
        impressions_per_day: 3000,
        ..DriftConfig::desk(seed)
    }
}

#[test]
fn stream_shape() {
    let cfg = small(4);
    let g = generate_stream(&cfg).unwrap();
    let s = &g.stream;
    assert_eq!(s.n_days(), 8);
    assert_eq!(g.trace.len(), 8);
    for (i, d) in s.days.iter().enumerate() {
        assert_eq!(d.day, i as u32 + 1);
        assert_eq!(d.len(), cfg.impressions_per_day);
        let active: BTreeSet<u32> = g.trace[i].active.iter().copied().collect();
        assert_eq!(active.len(), cfg.catalog_size as usize);
        for x in &d.samples {
            assert_eq!(x.day, d.day);
            assert!(x.user_id < cfg.n_users);
            assert!(active.contains(&x.item_id));
            assert_eq!(x.context_ids.len(), cfg.context_cardinalities.len());
            assert!(x.context_ids[0] < cfg.context_cardinalities[0]);
            assert!(x.label <= 1);
        }
    }
}

#[test]
fn same_seed_same_stream_other_seed_differs() {
    let a = generate_stream(&small(1)).unwrap().stream;
    let b = generate_stream(&small(1)).unwrap().stream;
    let c = generate_stream(&small(2)).unwrap().stream;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn catalog_churns_at_the_configured_rate() {
    let cfg = small(5);
    let g = generate_stream(&cfg).unwrap();
    for w in g.trace.windows(2) {
        let prev: BTreeSet<u32> = w[0].active.iter().copied().collect();
        let fresh = w[1].active.iter().filter(|v| !prev.contains(v)).count();
        assert_eq!(fresh, (cfg.churn_rate * cfg.catalog_size as f64).round() as usize);
    }
}

#[test]
fn churn_and_item_shift_grow_with_gap() {
    let s = generate_stream(&small(6)).unwrap().stream;
    let near = new_item_fraction(&s, 1, 2).unwrap();
    let far = new_item_fraction(&s, 1, 8).unwrap();
    assert!(near < far, "{near} vs {far}");
    assert!(kl_item_dist(&s, 1, 2, 0.5).unwrap() < kl_item_dist(&s, 1, 8, 0.5).unwrap());
}

#[test]
fn stationary_stream_keeps_its_catalog() {
    let g = generate_stream(&DriftConfig { n_days: 5, ..DriftConfig::stationary(3) }).unwrap();
    assert!(g.trace.windows(2).all(|w| w[0].active == w[1].active && w[0].weights == w[1].weights));
}

#[test]
fn empirical_click_rate_tracks_true_probabilities() {
    let cfg = small(7);
    let g = generate_stream(&cfg).unwrap();
    for d in &g.stream.days {
        let p = true_click_probs(&cfg, &g.trace, &d.samples).unwrap();
        let expected: f64 = p.iter().sum::<f64>() / p.len() as f64;
        let sd = (expected * (1.0 - expected) / p.len() as f64).sqrt();
        assert!((d.click_rate() - expected).abs() < 5.0 * sd, "day {}", d.day);
    }
}

#[test]
fn file_round_trip() {
    let s = generate_stream(&small(8)).unwrap().stream;
    let mut buf = Vec::new();
    write_stream_to(&s, &mut buf).unwrap();
    let back = read_stream_from(&buf[..]).unwrap();
    assert_eq!(back.schema, s.schema);
    assert_eq!(back.days, s.days);
    assert!(back.catalog.is_none());
}
