use colf::eval::{auc, kl_divergence, relative_gain};
use colf::rng::rng_for;
use proptest::prelude::*;
use rand::Rng;

fn brute_auc(preds: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in preds.iter().enumerate() {
        for (j, &pj) in preds.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                num += if pi > pj {
                    1.0
                } else if pi == pj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn instance(seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = rng_for(&[seed, 3]);
    let n = rng.gen_range(2..=50);
    let levels = rng.gen_range(1..=6);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    labels[0] = 1;
    labels[n - 1] = 0;
    let preds = (0..n)
        .map(|_| {
            if rng.gen_bool(0.6) {
                f64::from(rng.gen_range(0..levels)) / 7.0
            } else {
                rng.gen()
            }
        })
        .collect();
    (preds, labels)
}

#[test]
fn auc_equals_pairwise_counting() {
    for seed in 0..200 {
        let (p, y) = instance(seed);
        assert!((auc(&p, &y).unwrap() - brute_auc(&p, &y)).abs() <= 1e-12, "instance {seed}");
    }
}

#[test]
fn all_tied_is_half() {
    assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
}

#[test]
fn relative_gains_to_four_places() {
    assert_eq!(format!("{:.4}", relative_gain(0.7525, 0.7450).unwrap()), "0.0101");
    assert_eq!(format!("{:.4}", relative_gain(0.7196, 0.7150).unwrap()), "0.0064");
}

#[test]
fn kl_is_non_negative_and_asymmetric() {
    let p = [0.7, 0.2, 0.1];
    let q = [0.2, 0.3, 0.5];
    let a = kl_divergence(&p, &q).unwrap();
    let b = kl_divergence(&q, &p).unwrap();
    assert!(a > 0.0 && b > 0.0 && (a - b).abs() > 1e-6);
}

proptest! {
    #[test]
    fn auc_is_invariant_to_monotone_maps(seed in 0u64..100_000) {
        let (p, y) = instance(seed);
        let mapped: Vec<f64> = p.iter().map(|x| (3.0 * x).exp() - 2.0).collect();
        prop_assert!((auc(&p, &y).unwrap() - auc(&mapped, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn flipping_labels_mirrors_auc(seed in 0u64..100_000) {
        let (p, y) = instance(seed);
        let flipped: Vec<u8> = y.iter().map(|l| 1 - l).collect();
        prop_assert!((auc(&p, &y).unwrap() + auc(&p, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_order(seed in 0u64..100_000) {
        let (p, y) = instance(seed);
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.reverse();
        idx.rotate_left(seed as usize % p.len());
        let p2: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let y2: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
        let a = auc(&p, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - auc(&p2, &y2).unwrap()).abs() < 1e-12);
    }
}
