//! End-to-end checks of the training loop: determinism, resume equivalence,
//! loss reduction under every strategy, sweep-wide smoke coverage, and the
//! failure paths a host must be able to rely on.

use pulsekd_core::data::{split_participants, synth_ppg, window, WindowedSample};
use pulsekd_core::distill::{DistillConfig, Strategy};
use pulsekd_core::loss::argmax_row;
use pulsekd_core::model::{Model, ModelSpec, SWEEP_BLOCK_COUNTS};
use pulsekd_core::train::{
    evaluate_mae, init_state, train, train_epochs, NullClock, TrainConfig,
};
use pulsekd_core::Error;

/// Small but realistic corpus: four synthetic participants with distinct
/// heart-rate trajectories, windowed at the standard rate, split by
/// participant (three train, one test).
fn corpus() -> (Vec<WindowedSample>, Vec<WindowedSample>) {
    let profiles: [&[(f64, f64)]; 4] = [
        &[(0.0, 62.0), (24.0, 95.0)],
        &[(0.0, 140.0), (12.0, 100.0), (24.0, 80.0)],
        &[(0.0, 75.0), (24.0, 75.0)],
        &[(0.0, 110.0), (24.0, 165.0)],
    ];
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    for (i, profile) in profiles.iter().enumerate() {
        let rec = synth_ppg(&format!("p{i}"), profile, 24.0, 25.0, 0.2, 0.0, 1000 + i as u64).unwrap();
        let wins = window(&rec).unwrap();
        assert_eq!(wins.len(), 9, "each participant should contribute 9 windows");
        if i < 3 {
            train_set.extend(wins);
        } else {
            val_set.extend(wins);
        }
    }
    (train_set, val_set)
}

fn quick_config(strategy: Strategy, epochs: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(DistillConfig::for_strategy(strategy));
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.seed = seed;
    cfg
}

#[test]
fn training_is_deterministic() {
    let (train_set, val_set) = corpus();
    let spec = ModelSpec::resnet(1);
    let cfg = quick_config(Strategy::Scratch, 3, 11);

    let (m1, h1) = train(&spec, &train_set, &val_set, &cfg, None, &NullClock).unwrap();
    let (m2, h2) = train(&spec, &train_set, &val_set, &cfg, None, &NullClock).unwrap();

    assert_eq!(h1.train_loss, h2.train_loss, "loss curves must be bit-identical");
    assert_eq!(h1.val_mae, h2.val_mae);
    for ((n1, p1), (n2, p2)) in m1.named_params().iter().zip(m2.named_params().iter()) {
        assert_eq!(n1, n2);
        assert_eq!(p1.data(), p2.data(), "parameter {n1} diverged between runs");
    }

    // a different seed must actually change the outcome
    let mut other = cfg.clone();
    other.seed = 12;
    let (_, h3) = train(&spec, &train_set, &val_set, &other, None, &NullClock).unwrap();
    assert_ne!(h1.train_loss, h3.train_loss);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let (train_set, val_set) = corpus();
    let spec = ModelSpec::resnet(1);
    let cfg = quick_config(Strategy::Scratch, 6, 21);

    let mut full = init_state(&spec, &cfg, None).unwrap();
    let mut split = full.clone();

    let h_full =
        train_epochs(&mut full, &train_set, &val_set, &cfg, None, 6, &NullClock).unwrap();
    let mut h_split =
        train_epochs(&mut split, &train_set, &val_set, &cfg, None, 3, &NullClock).unwrap();
    let h_tail =
        train_epochs(&mut split, &train_set, &val_set, &cfg, None, 3, &NullClock).unwrap();
    h_split.append(&h_tail);

    assert_eq!(h_full.train_loss, h_split.train_loss);
    assert_eq!(h_full.val_mae, h_split.val_mae);
    assert_eq!(full.completed_epochs, split.completed_epochs);
    assert_eq!(full.adam.step_count(), split.adam.step_count());
    for ((n1, p1), (n2, p2)) in full
        .model
        .named_params()
        .iter()
        .zip(split.model.named_params().iter())
    {
        assert_eq!(n1, n2);
        assert_eq!(p1.data(), p2.data(), "parameter {n1} diverged after resume");
    }
}

#[test]
fn every_strategy_reduces_training_loss() {
    let (train_set, val_set) = corpus();
    let student = ModelSpec::resnet(1);
    let teacher = Model::build(&ModelSpec::resnet(2), 77).unwrap();

    for &strategy in &Strategy::ALL {
        let cfg = quick_config(strategy, 6, 31);
        let teacher_ref = strategy.needs_teacher().then_some(&teacher);
        let (_, history) =
            train(&student, &train_set, &val_set, &cfg, teacher_ref, &NullClock).unwrap();
        let first = history.train_loss[0];
        let last = *history.train_loss.last().unwrap();
        assert!(
            last < first,
            "{strategy}: loss went {first} -> {last} over {} epochs",
            cfg.epochs
        );
        assert!(history.train_loss.iter().all(|l| l.is_finite()));
        assert!(history.val_mae.iter().all(|m| m.is_finite() && *m >= 0.0));
    }
}

#[test]
fn every_sweep_size_completes_an_epoch() {
    let (train_set, val_set) = corpus();
    let train_small = &train_set[..12];
    let val_small = &val_set[..4];
    let cfg = quick_config(Strategy::Scratch, 1, 41);

    for &blocks in &SWEEP_BLOCK_COUNTS {
        let (_, history) = train(
            &ModelSpec::resnet(blocks),
            train_small,
            val_small,
            &cfg,
            None,
            &NullClock,
        )
        .unwrap();
        assert_eq!(history.train_loss.len(), 1, "{blocks}-block run");
        assert!(history.train_loss[0].is_finite());
    }

    let (_, history) = train(
        &ModelSpec::mlp(&[64]),
        train_small,
        val_small,
        &cfg,
        None,
        &NullClock,
    )
    .unwrap();
    assert!(history.train_loss[0].is_finite());
}

#[test]
fn single_batch_loss_decreases_monotonically_for_every_strategy() {
    // one full-corpus batch repeated for ten steps: each step must improve
    let (train_set, val_set) = corpus();
    let student = ModelSpec::resnet(1);
    let teacher = Model::build(&ModelSpec::resnet(1), 123).unwrap();

    for &strategy in &Strategy::ALL {
        let mut cfg = quick_config(strategy, 10, 71);
        cfg.batch_size = train_set.len(); // a single batch per epoch
        cfg.lr = 5e-4;
        let teacher_ref = strategy.needs_teacher().then_some(&teacher);
        let (_, h) =
            train(&student, &train_set, &val_set, &cfg, teacher_ref, &NullClock).unwrap();
        for (i, pair) in h.train_loss.windows(2).enumerate() {
            assert!(
                pair[1] < pair[0],
                "{strategy}: step {} loss {} did not improve on {}",
                i + 1,
                pair[1],
                pair[0]
            );
        }
    }
}

#[test]
fn scratch_beats_uniform_on_a_constant_corpus() {
    // 200 windows all labeled with the same heart rate: five epochs must push
    // the loss below the uniform-distribution entropy ln(180)
    let rec = synth_ppg("p", &[(0.0, 88.0)], 408.0, 25.0, 0.3, 0.0, 17).unwrap();
    let wins = window(&rec).unwrap();
    assert!(wins.len() >= 200, "got {} windows", wins.len());
    let train_set = &wins[..200];
    let val_set = &wins[..8];

    let mut cfg = quick_config(Strategy::Scratch, 5, 81);
    cfg.batch_size = 32;
    let (_, h) = train(&ModelSpec::resnet(1), train_set, val_set, &cfg, None, &NullClock)
        .unwrap();
    let uniform = (180.0f64).ln();
    assert!(
        *h.train_loss.last().unwrap() < uniform,
        "final loss {} not below ln(180) = {uniform}",
        h.train_loss.last().unwrap()
    );
}

#[test]
fn zero_weight_model_predicts_the_first_bin() {
    // all-zero parameters → all-zero logits → argmax ties resolve to bin 0,
    // so every prediction is 30.5 BPM and the MAE has a closed form
    let (_, val_set) = corpus();
    let mut model = Model::build(&ModelSpec::resnet(1), 5).unwrap();
    for p in model.params_mut() {
        p.data_mut().fill(0.0);
    }
    let reported = evaluate_mae(&model, &val_set).unwrap();
    let expected: f64 =
        val_set.iter().map(|w| (w.hr_bpm - 30.5).abs()).sum::<f64>() / val_set.len() as f64;
    assert!(
        (reported - expected).abs() < 1e-12,
        "MAE {reported} vs closed form {expected}"
    );
}

#[test]
fn histories_cover_every_epoch() {
    let (train_set, val_set) = corpus();
    let cfg = quick_config(Strategy::Scratch, 4, 51);
    let (_, h) = train(&ModelSpec::mlp(&[32]), &train_set, &val_set, &cfg, None, &NullClock)
        .unwrap();
    assert_eq!(h.train_loss.len(), 4);
    assert_eq!(h.val_mae.len(), 4);
    assert_eq!(h.epoch_seconds.len(), 4);
}

#[test]
fn diverging_run_reports_located_failure() {
    let (train_set, val_set) = corpus();
    let mut cfg = quick_config(Strategy::Scratch, 4, 61);
    // Adam moves each parameter by ~lr per step, so one step at the f64
    // edge sends the weights to ±1e308 and the next forward pass overflows
    cfg.lr = 1e308;
    let err = train(&ModelSpec::mlp(&[8]), &train_set, &val_set, &cfg, None, &NullClock)
        .unwrap_err();
    match err {
        Error::NonFiniteLoss { .. } => {}
        other => panic!("expected a located non-finite-loss failure, got {other:?}"),
    }
}

#[test]
fn teacher_strategy_pairing_is_enforced() {
    let spec = ModelSpec::resnet(1);
    let teacher = Model::build(&ModelSpec::resnet(2), 7).unwrap();

    // distillation without a teacher
    for strategy in [Strategy::Hard, Strategy::Soft, Strategy::Dkd, Strategy::Feature] {
        let cfg = quick_config(strategy, 1, 1);
        assert!(init_state(&spec, &cfg, None).is_err(), "{strategy} needs a teacher");
    }
    // scratch with a teacher
    let cfg = quick_config(Strategy::Scratch, 1, 1);
    assert!(init_state(&spec, &cfg, Some(&teacher)).is_err());

    // interface mismatch: a teacher over a different label space
    let mut odd = ModelSpec::resnet(2);
    odd.num_classes = 10;
    let odd_teacher = Model::build(&odd, 7).unwrap();
    let cfg = quick_config(Strategy::Soft, 1, 1);
    assert!(init_state(&spec, &cfg, Some(&odd_teacher)).is_err());
}

#[test]
fn evaluate_mae_matches_manual_recomputation() {
    let (_, val_set) = corpus();
    let model = Model::build(&ModelSpec::resnet(1), 3).unwrap();
    let reported = evaluate_mae(&model, &val_set).unwrap();

    let k = model.spec().num_classes;
    let mut abs_sum = 0.0;
    for s in &val_set {
        let batch = pulsekd_core::Tensor::from_vec(
            &[1, 1, s.window.dim(1)],
            s.window.data().to_vec(),
        )
        .unwrap();
        let (logits, _) = model.forward_eval(&batch).unwrap();
        let bin = argmax_row(&logits.data()[..k]);
        let pred = pulsekd_core::data::bin_to_bpm(bin).unwrap();
        abs_sum += (pred - s.hr_bpm).abs();
    }
    let manual = abs_sum / val_set.len() as f64;
    assert!(
        (reported - manual).abs() < 1e-12,
        "evaluate_mae {reported} vs manual {manual}"
    );
}

#[test]
fn participant_split_feeds_training_disjointly() {
    // the splitter and the windower cooperate: no window of a test
    // participant can reach the training set
    let ids: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
    let plan = split_participants(&ids, 0.8, 0, 99).unwrap();
    let mut all = Vec::new();
    for id in &ids {
        let rec = synth_ppg(id, &[(0.0, 90.0)], 16.0, 25.0, 0.1, 0.0, 5).unwrap();
        all.extend(window(&rec).unwrap());
    }
    let train_w: Vec<_> = all
        .iter()
        .filter(|w| plan.train.contains(&w.participant_id))
        .collect();
    let test_w: Vec<_> = all
        .iter()
        .filter(|w| plan.test.contains(&w.participant_id))
        .collect();
    assert_eq!(train_w.len() + test_w.len(), all.len());
    for w in &train_w {
        assert!(!plan.test.contains(&w.participant_id));
    }
}
