mod common;

use toxspan::corpus::{generate_synthetic, SynthConfig};
use toxspan::loss::{DiceLossConfig, LossSelector};
use toxspan::model::{backward, train, LabelerConfig, OptimizerConfig, TrainSchedule};
use toxspan::textproc::{prepare, CleaningConfig};
use toxspan::Error;

fn worst_block_error(loss: LossSelector, seed: u64, cases: usize) -> f64 {
    let mut rng = common::rng(seed);
    let cfg = common::small_config();
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (seq, params) = common::kink_free_case(&mut rng, &cfg, 1e-3);
        for block in common::check_gradients(&seq, &params, &cfg, &loss, 1e-4) {
            assert!(
                block.rel_error.is_finite(),
                "{}: {}",
                block.block,
                block.rel_error
            );
            worst = worst.max(block.rel_error);
        }
    }
    worst
}

#[test]
fn backward_matches_finite_differences_for_cross_entropy() {
    let worst = worst_block_error(LossSelector::CrossEntropy, 11, 100);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn backward_matches_finite_differences_for_weighted_cross_entropy() {
    let loss = LossSelector::WeightedCrossEntropy {
        positive_weight: 4.0,
    };
    let worst = worst_block_error(loss, 12, 50);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn backward_matches_finite_differences_for_dice() {
    for (seed, (alpha, gamma)) in [(0.0, 1.0), (0.4, 0.25), (0.7, 0.25), (0.8, 2.0)]
        .into_iter()
        .enumerate()
    {
        let loss = LossSelector::Dice(DiceLossConfig::new(alpha, gamma).unwrap());
        let worst = worst_block_error(loss, 20 + seed as u64, 25);
        assert!(
            worst < 1e-4,
            "alpha={alpha} gamma={gamma}: worst relative error {worst}"
        );
    }
}

#[test]
fn inactive_only_sequence_has_zero_loss_and_gradient() {
    let cfg = common::small_config();
    let mut rng = common::rng(3);
    let mut seq = common::random_sequence(&mut rng);
    for t in &mut seq.tokens {
        t.active = false;
        t.text.clear();
    }
    seq.labels.iter_mut().for_each(|l| *l = 0);
    let params = common::random_params(&cfg, &mut rng);
    let (loss, grads) = backward(&seq, &params, &cfg, &LossSelector::default()).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.embedding.is_empty());
    assert!(grads
        .w1
        .iter()
        .chain(&grads.b1)
        .chain(&grads.w2)
        .all(|&g| g == 0.0));
    assert_eq!(grads.b2, 0.0);
}

fn small_corpus() -> (
    Vec<toxspan::textproc::LabeledSequence>,
    Vec<toxspan::textproc::LabeledSequence>,
) {
    let docs = generate_synthetic(&SynthConfig::new(400, 9)).unwrap();
    let cleaning = CleaningConfig::default();
    let seqs: Vec<_> = docs.iter().map(|d| prepare(d, &cleaning)).collect();
    let (tr, dv) = seqs.split_at(350);
    (tr.to_vec(), dv.to_vec())
}

fn small_labeler() -> LabelerConfig {
    LabelerConfig {
        embed_dim: 8,
        hidden_dim: 16,
        hash_buckets: 4096,
        ..LabelerConfig::default()
    }
}

#[test]
fn training_reduces_loss_and_picks_best_epoch() {
    let (tr, dv) = small_corpus();
    let opt = OptimizerConfig {
        learning_rate: 0.01,
        ..OptimizerConfig::default()
    };
    let schedule = TrainSchedule {
        epochs: 4,
        ..TrainSchedule::default()
    };
    let (params, log) = train(
        &tr,
        &dv,
        &small_labeler(),
        &opt,
        &LossSelector::CrossEntropy,
        &schedule,
    )
    .unwrap();
    assert!(params.all_finite());
    assert_eq!(log.epochs.len(), 4);
    let first = log.epochs[0].train_loss;
    let last = log.epochs[3].train_loss;
    assert!(last < first, "{first} -> {last}");
    let best = log.epochs.iter().map(|e| e.dev.f1).fold(f64::MIN, f64::max);
    assert_eq!(log.epochs[log.best_epoch.unwrap() - 1].dev.f1, best);
    assert!(best > 0.9, "best dev token F1 {best}");
}

#[test]
fn training_is_deterministic_and_seed_sensitive() {
    let (tr, dv) = small_corpus();
    let opt = OptimizerConfig::default();
    let run = |seed| {
        let schedule = TrainSchedule {
            epochs: 2,
            seed,
            ..TrainSchedule::default()
        };
        train(
            &tr,
            &dv,
            &small_labeler(),
            &opt,
            &LossSelector::default(),
            &schedule,
        )
        .unwrap()
    };
    let (a, la) = run(1);
    let (b, lb) = run(1);
    let (c, _) = run(2);
    assert_eq!(a, b);
    assert_eq!(la.to_tsv(), lb.to_tsv());
    assert_ne!(a, c);
}

#[test]
fn exploding_updates_are_reported_as_divergence() {
    let (tr, dv) = small_corpus();
    let opt = OptimizerConfig {
        learning_rate: 1e308,
        weight_decay: 0.0,
        ..OptimizerConfig::default()
    };
    let schedule = TrainSchedule {
        epochs: 2,
        ..TrainSchedule::default()
    };
    let err = train(
        &tr,
        &dv,
        &small_labeler(),
        &opt,
        &LossSelector::CrossEntropy,
        &schedule,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn invalid_configuration_is_rejected_before_training() {
    let (tr, dv) = small_corpus();
    let opt = OptimizerConfig {
        beta1: 1.0,
        ..OptimizerConfig::default()
    };
    let err = train(
        &tr,
        &dv,
        &small_labeler(),
        &opt,
        &LossSelector::default(),
        &TrainSchedule::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}
