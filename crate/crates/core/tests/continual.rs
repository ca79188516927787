use colf::continual::{build_learner, ColfLearner};
use colf::models::{spawn_head, train_head_on_memory};
use colf::{generate_stream, run_continual, run_matrix, Ablations, DayPartition, DriftConfig, Stream, StrategyConfig, StrategyKind, TrainHyper};

const KINDS: [StrategyKind; 5] = [
    StrategyKind::Colf,
    StrategyKind::Incremental,
    StrategyKind::SlidingWindow,
    StrategyKind::Cbrs,
    StrategyKind::AderFreq,
];

fn small(seed: u64) -> DriftConfig {
    DriftConfig {
        n_days: 6,
        n_users: 300,
        catalog_size: 400,
        impressions_per_day: 3000,
        ..DriftConfig::desk(seed)
    }
}

fn strategy(kind: StrategyKind) -> StrategyConfig {
    let mut s = StrategyConfig::new(kind);
    s.base_train.optimizer.learning_rate = 1e-2;
    s.head_train.optimizer.learning_rate = 1e-2;
    s.policy.cap = 8000;
    s.window_days = 3;
    s
}

#[test]
fn head_training_leaves_the_base_untouched() {
    let stream = generate_stream(&small(1)).unwrap().stream;
    let mut learner = ColfLearner::new(strategy(StrategyKind::Colf), &stream.schema).unwrap();
    for d in &stream.days[..3] {
        learner.step(d).unwrap();
    }
    let base = learner.base().clone();
    let mut pair = spawn_head(&base);
    let hyper = TrainHyper {
        epochs: 2,
        ..Default::default()
    };
    train_head_on_memory(&mut pair, learner.memory(), 1.0, &hyper, 5).unwrap();
    assert_eq!(pair.base, base);
    assert!(!pair.head.bits_eq(&base.stack));

    let inf = learner.inference().unwrap();
    assert!(inf.base.embeddings.iter().zip(&learner.base().embeddings).all(|(a, b)| a.bits_eq(b)));
}

fn flip_from(stream: &Stream, day: u32) -> Stream {
    let mut s = stream.clone();
    for d in s.days.iter_mut().filter(|d| d.day >= day) {
        d.samples.iter_mut().for_each(|x| x.label = 1 - x.label);
    }
    s
}

#[test]
fn predictions_never_see_their_own_labels() {
    let stream = generate_stream(&small(2)).unwrap().stream;
    let flipped = flip_from(&stream, 4);
    for kind in KINDS {
        let a = run_continual(&stream, &strategy(kind)).unwrap();
        let b = run_continual(&flipped, &strategy(kind)).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.model_day + 1, ra.day);
            if ra.day < 4 {
                assert_eq!(ra.auc.to_bits(), rb.auc.to_bits(), "{kind:?} day {}", ra.day);
            } else if ra.day == 4 {
                // Same predictions against mirrored labels.
                assert!((ra.auc + rb.auc - 1.0).abs() < 1e-12, "{kind:?}");
            }
        }
    }
}

#[test]
fn learners_reject_out_of_order_days() {
    let stream = generate_stream(&small(3)).unwrap().stream;
    for kind in KINDS {
        let mut l = build_learner(&strategy(kind), &stream.schema).unwrap();
        assert!(l.predict(&stream.days[0]).unwrap().is_none());
        l.observe(&stream.days[0]).unwrap();
        l.observe(&stream.days[1]).unwrap();
        assert!(l.observe(&stream.days[1]).is_err(), "{kind:?}");
        assert!(l.observe(&stream.days[0]).is_err(), "{kind:?}");
        assert_eq!(l.trained_through(), Some(2));
    }
}

#[test]
fn empty_day_is_rejected() {
    let stream = generate_stream(&small(3)).unwrap().stream;
    let mut l = ColfLearner::new(strategy(StrategyKind::Colf), &stream.schema).unwrap();
    assert!(l.step(&DayPartition::new(1, Vec::new()).unwrap()).is_err());
}

#[test]
fn snapshots_follow_memory_partitions() {
    let stream = generate_stream(&small(4)).unwrap().stream;
    let mut l = ColfLearner::new(strategy(StrategyKind::Colf), &stream.schema).unwrap();
    for d in &stream.days {
        l.step(d).unwrap();
        let mut expected = l.memory().days();
        if !expected.contains(&d.day) {
            expected.push(d.day);
        }
        assert_eq!(l.snapshot_days(), expected);
    }
}

#[test]
fn run_matrix_is_deterministic_and_independent_of_jobs() {
    let mut strategies: Vec<StrategyConfig> = KINDS.iter().map(|&k| strategy(k)).collect();
    strategies.push(strategy(StrategyKind::Colf).with_ablations(Ablations {
        no_new: true,
        ..Default::default()
    }));
    let seeds = [1, 2];
    let a = run_matrix(&small(0), &strategies, &seeds, 1).unwrap();
    let b = run_matrix(&small(0), &strategies, &seeds, 4).unwrap();
    assert_eq!(a.len(), strategies.len() * seeds.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.same_outcome(y), "{} seed {}", x.strategy, x.seed);
    }
    let labels: Vec<&str> = a.iter().map(|r| r.strategy.as_str()).collect();
    assert_eq!(&labels[..3], &["colf", "colf", "incremental"]);
}

#[test]
fn memory_methods_share_the_cap() {
    let stream = generate_stream(&small(5)).unwrap().stream;
    for kind in [StrategyKind::Colf, StrategyKind::SlidingWindow, StrategyKind::Cbrs, StrategyKind::AderFreq] {
        let r = run_continual(&stream, &strategy(kind)).unwrap();
        assert!(r.rows.iter().all(|d| d.memory_size <= 8000), "{kind:?}");
        assert!(r.rows.last().unwrap().memory_size > 0);
    }
}

#[test]
fn ablations_change_the_outcome() {
    let stream = generate_stream(&small(6)).unwrap().stream;
    let full = run_continual(&stream, &strategy(StrategyKind::Colf)).unwrap();
    for a in [
        Ablations { no_modular: true, ..Default::default() },
        Ablations { no_relevant: true, ..Default::default() },
        Ablations { no_new: true, ..Default::default() },
    ] {
        let r = run_continual(&stream, &strategy(StrategyKind::Colf).with_ablations(a)).unwrap();
        assert!(r.strategy.starts_with("colf-"));
        assert!(!r.same_outcome(&full), "{}", r.strategy);
    }
}
