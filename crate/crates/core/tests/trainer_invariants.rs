mod common;

use open_intent::data::SynthConfig;
use open_intent::encoder::{EncoderConfig, EncoderModel, ParamGroup, Trainability};
use open_intent::pipeline::{self, Prepared};
use open_intent::rng;
use open_intent::trainer::{self, batch_gradients, Stage, TrainConfig, TrainReport};
use open_intent::Error;

fn quick_config() -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        max_epochs: 3,
        lr: 3e-3,
        ..TrainConfig::default()
    }
}

fn small_model(prepared: &Prepared, seed: u64) -> EncoderModel {
    EncoderModel::new(common::small_encoder(prepared.vocab.len()), prepared.data.num_known, seed).unwrap()
}

fn strip_time(mut r: TrainReport) -> TrainReport {
    r.wall_time_secs = 0.0;
    r
}

#[test]
fn frozen_groups_are_bit_identical_after_training() {
    let (_, prepared) = common::small_prepared(1);
    let mut model = small_model(&prepared, 0);
    model.set_trainable(Trainability::last_layer_only(2)).unwrap();
    let before = model.clone();
    trainer::pretrain(&mut model, &prepared.data, &quick_config()).unwrap();
    trainer::train_open(&mut model, &prepared.data, &quick_config()).unwrap();
    for (a, b) in before.params().tensors().iter().zip(model.params().tensors()) {
        let frozen = matches!(a.group, ParamGroup::Embeddings | ParamGroup::Layer(1));
        assert_eq!(frozen, a.tensor.values() == b.tensor.values(), "{}", a.name);
    }
}

#[test]
fn combined_loss_is_the_weighted_sum_when_pseudo_samples_exist() {
    let (_, prepared) = common::small_prepared(2);
    let model = small_model(&prepared, 0);
    let cfg = TrainConfig {
        mu: 0.3,
        ..quick_config()
    };
    let (ids, labels) = prepared.data.train.select(&(0..16).collect::<Vec<_>>());
    let mut r = rng::stream(4, "mixup");
    for _ in 0..5 {
        let (l, _) = batch_gradients(&model, &ids, &labels, &cfg, Stage::Open, &mut r).unwrap();
        assert!(l.pseudo_samples >= 1);
        assert_eq!(l.total, cfg.mu * l.primary + (1.0 - cfg.mu) * l.mixup.unwrap());
    }
    let mut model = model;
    let report = trainer::train_open(&mut model, &prepared.data, &cfg).unwrap();
    for s in &report.steps {
        match s.mixup_loss {
            Some(lm) => assert_eq!(s.total_loss, cfg.mu * s.primary_loss + (1.0 - cfg.mu) * lm),
            None => assert_eq!(s.total_loss, s.primary_loss),
        }
        assert!(s.total_loss.is_finite());
    }
}

#[test]
fn batches_without_pairs_use_the_soft_label_loss_alone() {
    let model = common::tiny_model(3, 0);
    let mut r = rng::stream(0, "mixup");
    let (l, _) = batch_gradients(&model, &[&[3, 4], &[5, 6]], &[2, 2], &TrainConfig::default(), Stage::Open, &mut r).unwrap();
    assert_eq!(l.pseudo_samples, 0);
    assert_eq!(l.mixup, None);
    assert_eq!(l.total, l.primary);
}

#[test]
fn mu_one_leaves_gradients_unchanged_by_mixup() {
    let (_, prepared) = common::small_prepared(3);
    let model = small_model(&prepared, 0);
    let (ids, labels) = prepared.data.train.select(&(0..16).collect::<Vec<_>>());
    let with = TrainConfig {
        mu: 1.0,
        ..quick_config()
    };
    let without = TrainConfig {
        disable_mm: true,
        ..with.clone()
    };
    let mut r = rng::stream(0, "mixup");
    let (lw, gw) = batch_gradients(&model, &ids, &labels, &with, Stage::Open, &mut r).unwrap();
    let (lo, go) = batch_gradients(&model, &ids, &labels, &without, Stage::Open, &mut r).unwrap();
    assert!(lw.pseudo_samples > 0);
    assert_eq!(lw.total, lo.total);
    assert_eq!(gw, go);
}

/// With one-hot targets and no mixup, open training is pretraining with an
/// extra logit. Pinning that logit at -1e4 removes it from every softmax,
/// so the two runs must agree step for step.
#[test]
fn one_hot_without_mixup_reduces_to_continued_pretraining() {
    let (_, prepared) = common::small_prepared(4);
    let mut start = small_model(&prepared, 0);
    trainer::pretrain(&mut start, &prepared.data, &quick_config()).unwrap();
    let k = prepared.data.num_known;
    start.params_mut().classifier_b[k] = -1e4;

    let cfg = TrainConfig {
        xi: 0.0,
        disable_mm: true,
        ..quick_config()
    };
    let mut a = start.clone();
    let pre = trainer::pretrain(&mut a, &prepared.data, &cfg).unwrap();
    let mut b = start.clone();
    let open = trainer::train_open(&mut b, &prepared.data, &cfg).unwrap();
    assert_eq!(pre.steps.len(), open.steps.len());
    for (x, y) in pre.steps.iter().zip(&open.steps) {
        let rel = (x.total_loss - y.total_loss).abs() / x.total_loss.abs().max(1e-300);
        assert!(rel <= 1e-6, "step {}: {} vs {}", x.step, x.total_loss, y.total_loss);
    }
    assert_eq!(pre.best_epoch, open.best_epoch);
}

/// Without pinning, the open logit starts from its pretrained value and
/// takes part in the softmax, so the first losses already differ.
#[test]
fn unpinned_open_logit_changes_the_losses() {
    let (_, prepared) = common::small_prepared(4);
    let mut start = small_model(&prepared, 0);
    trainer::pretrain(&mut start, &prepared.data, &quick_config()).unwrap();
    let cfg = TrainConfig {
        xi: 0.0,
        disable_mm: true,
        ..quick_config()
    };
    let pre = trainer::pretrain(&mut start.clone(), &prepared.data, &cfg).unwrap();
    let open = trainer::train_open(&mut start.clone(), &prepared.data, &cfg).unwrap();
    let first = (pre.steps[0].total_loss, open.steps[0].total_loss);
    assert!(first.1 > first.0, "{first:?}");
}

#[test]
fn training_is_reproducible_bit_for_bit() {
    let (_, prepared) = common::small_prepared(5);
    let run = || {
        let mut m = small_model(&prepared, 7);
        let cfg = TrainConfig {
            seed: 7,
            ..quick_config()
        };
        let a = trainer::pretrain(&mut m, &prepared.data, &cfg).unwrap();
        let b = trainer::train_open(&mut m, &prepared.data, &cfg).unwrap();
        (m, strip_time(a), strip_time(b))
    };
    let (m1, a1, b1) = run();
    let (m2, a2, b2) = run();
    assert_eq!(m1.params(), m2.params());
    assert_eq!(a1, a2);
    assert_eq!(b1, b2);
}

#[test]
fn report_epochs_are_consistent() {
    let (_, prepared) = common::small_prepared(6);
    let mut m = small_model(&prepared, 0);
    let cfg = TrainConfig {
        max_epochs: 6,
        patience: 2,
        ..quick_config()
    };
    let r = trainer::pretrain(&mut m, &prepared.data, &cfg).unwrap();
    assert!(1 <= r.best_epoch && r.best_epoch <= r.stop_epoch && r.stop_epoch <= 6);
    assert_eq!(r.epochs.len(), r.stop_epoch);
    assert!(r.stop_epoch == 6 || r.stop_epoch - r.best_epoch == 2);
    assert_eq!(r.steps.len(), r.stop_epoch * prepared.data.train.len().div_ceil(cfg.batch_size));
    assert!(r.steps.iter().all(|s| s.total_loss.is_finite()));
}

#[test]
fn pretraining_needs_two_known_classes() {
    let (_, mut prepared) = common::small_prepared(0);
    prepared.data.num_known = 1;
    let mut m = EncoderModel::new(common::small_encoder(prepared.vocab.len()), 1, 0).unwrap();
    let err = trainer::pretrain(&mut m, &prepared.data, &quick_config()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}

#[test]
fn non_finite_loss_aborts_with_position() {
    let (_, prepared) = common::small_prepared(0);
    let mut m = small_model(&prepared, 0);
    m.params_mut().classifier_b[0] = f64::NAN;
    match trainer::pretrain(&mut m, &prepared.data, &quick_config()) {
        Err(Error::NonFiniteLoss { step, epoch, batch, .. }) => assert_eq!((step, epoch, batch), (0, 1, 0)),
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn desk_pretraining_reaches_high_validation_accuracy() {
    let bundle = pipeline::synthetic_bundle(&SynthConfig::default(), 0.5).unwrap();
    let prepared = pipeline::prepare(&bundle, 1).unwrap();
    let mut model = EncoderModel::new(EncoderConfig::desk(prepared.vocab.len()), prepared.data.num_known, 0).unwrap();
    let report = trainer::pretrain(&mut model, &prepared.data, &TrainConfig::default()).unwrap();
    assert!(report.stop_epoch <= 30);
    let best = report.epochs[report.best_epoch - 1].validation.accuracy;
    assert!(best >= 0.95, "validation accuracy {best}");
}
