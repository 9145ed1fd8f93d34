mod common;

use common::flat_toy;
use episodic_al::data::LabeledImage;
use episodic_al::network::{
    evaluate_accuracy, fine_tune, fine_tune_with_stats, holdout_split, Architecture, NetworkSnapshot, Provenance,
    SetTag, TrainConfig,
};
use episodic_al::Error;

fn toy_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 16,
        max_epochs: 40,
        early_stop_patience: 8,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn toy_net(dropout: f64) -> NetworkSnapshot<f64> {
    NetworkSnapshot::build(Architecture::mlp(4, &[16], 2, dropout).unwrap(), 11)
}

fn refs(items: &[LabeledImage]) -> Vec<&LabeledImage> {
    items.iter().collect()
}

#[test]
fn separable_toy_problem_is_learned() {
    let train = flat_toy(400, 4, 1);
    let test = flat_toy(400, 4, 2);
    let net = fine_tune(&toy_net(0.0), &refs(&train), &toy_config()).unwrap();
    let acc = evaluate_accuracy(&net, &refs(&test)).unwrap();
    assert!(acc >= 0.99, "test accuracy {acc}");
}

#[test]
fn learning_survives_dropout_in_f32() {
    let train = flat_toy(400, 4, 1);
    let test = flat_toy(400, 4, 2);
    let net = NetworkSnapshot::<f32>::build(Architecture::mlp(4, &[32], 2, 0.25).unwrap(), 11);
    let net = fine_tune(&net, &refs(&train), &toy_config()).unwrap();
    let acc = evaluate_accuracy(&net, &refs(&test)).unwrap();
    assert!(acc >= 0.95, "test accuracy {acc}");
}

#[test]
fn zero_epochs_returns_the_input() {
    let train = flat_toy(20, 4, 1);
    let net = toy_net(0.5);
    let cfg = TrainConfig {
        max_epochs: 0,
        ..toy_config()
    };
    let (out, stats) = fine_tune_with_stats(&net, &refs(&train), &cfg).unwrap();
    assert_eq!(out, net);
    assert_eq!(stats.epochs_run, 0);
    assert_eq!(stats.best_epoch, 0);
}

#[test]
fn training_is_deterministic_and_leaves_input_untouched() {
    let train = flat_toy(60, 4, 5);
    let net = toy_net(0.5);
    let before = net.clone();
    let a = fine_tune(&net, &refs(&train), &toy_config()).unwrap();
    let b = fine_tune(&net, &refs(&train), &toy_config()).unwrap();
    assert_eq!(net, before);
    assert_eq!(a, b);
    assert_ne!(a.params(), net.params());
    let c = fine_tune(&net, &refs(&train), &toy_config().with_seed(4)).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn returned_parameters_are_from_the_best_epoch() {
    let train = flat_toy(120, 4, 8);
    let cfg = TrainConfig {
        learning_rate: 0.05,
        max_epochs: 12,
        early_stop_patience: 3,
        validation_fraction: 0.25,
        ..toy_config()
    };
    let (net, stats) = fine_tune_with_stats(&toy_net(0.5), &refs(&train), &cfg).unwrap();
    let best = stats.val_accuracy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first_best = stats.val_accuracy.iter().position(|&a| a == best).unwrap() + 1;
    assert_eq!(stats.best_epoch, first_best);

    let (_, val) = holdout_split(train.len(), &cfg);
    let val_items: Vec<&LabeledImage> = val.iter().map(|&i| &train[i]).collect();
    assert_eq!(evaluate_accuracy(&net, &val_items).unwrap(), best);
}

#[test]
fn patience_bounds_epochs_after_the_best() {
    let train = flat_toy(80, 4, 9);
    for patience in 1..4 {
        let cfg = TrainConfig {
            max_epochs: 30,
            early_stop_patience: patience,
            ..toy_config()
        };
        let (_, stats) = fine_tune_with_stats(&toy_net(0.5), &refs(&train), &cfg).unwrap();
        if stats.epochs_run < cfg.max_epochs {
            assert_eq!(stats.epochs_run - stats.best_epoch, patience);
        }
    }
}

#[test]
fn min_epochs_delays_early_stopping() {
    let train = flat_toy(80, 4, 9);
    let cfg = TrainConfig {
        max_epochs: 30,
        early_stop_patience: 1,
        min_epochs: 9,
        ..toy_config()
    };
    let (_, stats) = fine_tune_with_stats(&toy_net(0.5), &refs(&train), &cfg).unwrap();
    assert!(stats.epochs_run >= 9, "stopped after {} epochs", stats.epochs_run);

    let capped = TrainConfig { max_epochs: 4, ..cfg };
    let (_, stats) = fine_tune_with_stats(&toy_net(0.5), &refs(&train), &capped).unwrap();
    assert_eq!(stats.epochs_run, 4);
}

#[test]
fn single_example_trains() {
    let train = flat_toy(1, 4, 1);
    let (_, stats) = fine_tune_with_stats(&toy_net(0.0), &refs(&train), &toy_config()).unwrap();
    assert!(stats.epochs_run >= 1);
    assert_eq!(stats.val_accuracy[stats.best_epoch - 1], 1.0);
}

#[test]
fn bad_inputs_are_rejected() {
    let net = toy_net(0.0);
    assert!(matches!(
        fine_tune(&net, &[], &toy_config()),
        Err(Error::EmptyFineTuneSet)
    ));
    let wrong_shape = flat_toy(4, 5, 1);
    assert!(fine_tune(&net, &refs(&wrong_shape), &toy_config()).is_err());
    let mut bad_label = flat_toy(4, 4, 1);
    bad_label[0].label = 7;
    assert!(fine_tune(&net, &refs(&bad_label), &toy_config()).is_err());
    let cfg = TrainConfig {
        learning_rate: -1.0,
        ..toy_config()
    };
    assert!(fine_tune(&net, &refs(&flat_toy(4, 4, 1)), &cfg).is_err());
}

#[test]
fn trained_snapshots_round_trip_through_bytes() {
    let train = flat_toy(40, 4, 1);
    let net = fine_tune(&toy_net(0.5), &refs(&train), &toy_config()).unwrap();
    let prov = Provenance::root("N0").fine_tuned(vec![SetTag::Episode(1), SetTag::Episode(2)]);
    let net = net.with_provenance(prov, Some(2));
    let back = NetworkSnapshot::<f64>::from_bytes(&net.to_bytes()).unwrap();
    assert_eq!(back, net);

    let small = NetworkSnapshot::<f32>::build(Architecture::paper(0.5), 5);
    let back = NetworkSnapshot::<f32>::from_bytes(&small.to_bytes()).unwrap();
    assert_eq!(back, small);
    assert!(NetworkSnapshot::<f64>::from_bytes(&small.to_bytes()).is_err());

    let bytes = net.to_bytes();
    assert!(NetworkSnapshot::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(NetworkSnapshot::<f64>::from_bytes(&longer).is_err());
}
