use adabn_core::data::{kfold_split, Fold};
use adabn_core::synthetic::gaussian_blobs;
use adabn_core::train::{run_crossval, train_model, Scenario, TrainConfig};

fn config(scenario: Scenario, epochs: usize) -> TrainConfig {
    TrainConfig {
        scenario,
        batch_size: 8,
        epochs,
        conv_filters: [8, 8, 8],
        train_limit: None,
        eval_limit: None,
        ..TrainConfig::default()
    }
}

fn split(n: usize) -> Fold {
    kfold_split(n, 3, 11).unwrap().folds.swap_remove(0)
}

#[test]
fn separable_blobs_are_learned() {
    let data = gaussian_blobs(240, 2, 24, 5).unwrap();
    let cfg = TrainConfig { learning_rate: 0.01, ..config(Scenario::NoBn, 5) };
    let (_, m) = train_model(&cfg, &data, &split(240), &mut ()).unwrap();
    assert!(m.final_accuracy > 0.9, "accuracy {}", m.final_accuracy);
    assert!(m.epochs[4].mean_loss < m.epochs[0].mean_loss);
    assert!(m.epochs.iter().all(|e| e.mean_loss.is_finite() && (0.0..=1.0).contains(&e.val_accuracy)));
}

#[test]
fn silent_gate_equals_no_bn_bitwise() {
    let data = gaussian_blobs(120, 3, 24, 6).unwrap();
    let fold = split(120);
    let quiet = TrainConfig { upr_p: 1e6, lor_p: 1.0, ..config(Scenario::Adaptive, 4) };
    let (_, adaptive) = train_model(&quiet, &data, &fold, &mut ()).unwrap();
    let (_, plain) = train_model(&config(Scenario::NoBn, 4), &data, &fold, &mut ()).unwrap();
    assert_eq!(adaptive.normalized_batches, 0);
    assert_eq!(adaptive.gate_log.stats().unwrap().pooled.batches_gated, 0);
    for (a, b) in adaptive.epochs.iter().zip(&plain.epochs).skip(1) {
        assert_eq!(a.mean_loss.to_bits(), b.mean_loss.to_bits());
        assert_eq!(a.val_accuracy.to_bits(), b.val_accuracy.to_bits());
    }
}

#[test]
fn forced_gate_normalizes_every_later_batch() {
    let data = gaussian_blobs(120, 3, 24, 6).unwrap();
    let fold = split(120);
    let forced = TrainConfig { force_gate: true, ..config(Scenario::Adaptive, 4) };
    let (model, m) = train_model(&forced, &data, &fold, &mut ()).unwrap();
    let stats = m.gate_log.stats().unwrap();
    assert_eq!(stats.pooled_fraction, 1.0);
    assert!(stats.per_epoch.iter().all(|e| e.fraction == 1.0));
    let per_epoch = fold.train.len().div_ceil(forced.batch_size) as u64;
    assert_eq!(m.normalized_batches, 3 * per_epoch);
    assert_eq!(model.norm.unwrap().batches_seen, 3 * per_epoch);

    let (bn_model, bn) = train_model(&config(Scenario::Bn, 4), &data, &fold, &mut ()).unwrap();
    assert_eq!(bn.normalized_batches, 4 * per_epoch);
    assert_eq!(bn_model.norm.unwrap().batches_seen, 4 * per_epoch);
}

#[test]
fn crossval_is_deterministic() {
    let data = gaussian_blobs(90, 3, 22, 8).unwrap();
    let cfg = config(Scenario::Adaptive, 2);
    let a = run_crossval(&cfg, &data, &mut ()).unwrap();
    let b = run_crossval(&cfg, &data, &mut ()).unwrap();
    assert_eq!(a, b);
    let lo = a.fold_accuracies.iter().cloned().fold(1.0, f64::min);
    let hi = a.fold_accuracies.iter().cloned().fold(0.0, f64::max);
    assert!(lo <= a.mean && a.mean <= hi);
}
