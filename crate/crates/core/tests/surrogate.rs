use gwhp_core::dataset::{ChannelStats, DatasetSplit, NormStats, SplitAssignment, TrainingPair};
use gwhp_core::nn::ModelConfig;
use gwhp_core::surrogate::*;
use gwhp_core::Error;

const N: usize = 16;

fn stats() -> NormStats {
    let c = ChannelStats::from_range(-1e-5, 1e-5);
    NormStats {
        qx: c,
        qy: c,
        t: ChannelStats::from_range(0.0, 5.0),
    }
}

/// A blob centered on the grid, stretched along the flow direction.
fn pair(source_id: u64, ux: f64, uy: f64) -> TrainingPair {
    let mut input = vec![ux; N * N];
    input.extend(vec![uy; N * N]);
    let c = (N / 2) as f64;
    let target = (0..N * N)
        .map(|k| {
            let (i, j) = ((k % N) as f64 - c - 3.0 * ux, (k / N) as f64 - c - 3.0 * uy);
            2.0 * (-(i * i + j * j) / 8.0).exp() - 1.0
        })
        .collect();
    TrainingPair {
        nx: N,
        ny: N,
        input,
        target,
        source_id,
        rotation: 0,
        out_of_range: false,
        stats: stats(),
    }
}

fn split(train: Vec<TrainingPair>, validation: Vec<TrainingPair>) -> DatasetSplit {
    let assignment = SplitAssignment {
        seed: 0,
        train_sources: train.iter().map(|p| p.source_id).collect(),
        validation_sources: validation.iter().map(|p| p.source_id).collect(),
        test_sources: vec![],
    };
    DatasetSplit {
        train,
        validation,
        test: vec![],
        stats: stats(),
        assignment,
    }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        input_size: N,
        channel_schedule: vec![8, 16],
        ..ModelConfig::default()
    }
}

fn varied(n: u64, offset: u64) -> Vec<TrainingPair> {
    (0..n)
        .map(|k| {
            let a = (k + offset) as f64 * 0.9;
            pair(k + offset, 0.6 * a.cos(), 0.6 * a.sin())
        })
        .collect()
}

#[test]
fn overfits_a_single_pair() {
    let model = build_model(small_config(), stats(), 1).unwrap();
    let tc = TrainConfig {
        learning_rate: 2e-3,
        batch_size: 1,
        epochs: 2000,
        seed: 0,
        checkpoint_every: 0,
    };
    let s = split(vec![pair(1, 0.5, -0.2)], vec![]);
    let (model, history) = train(model, &s, &tc, |_| Ok(())).unwrap();
    assert!(history.best_loss < 1e-4, "best loss {}", history.best_loss);
    assert!(evaluate_loss(&model, &s.train, 1).unwrap() < 1e-4);
}

#[test]
fn training_is_deterministic() {
    let s = split(varied(6, 0), varied(2, 100));
    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        epochs: 5,
        seed: 3,
        checkpoint_every: 0,
    };
    let run = || {
        train(
            build_model(small_config(), stats(), 9).unwrap(),
            &s,
            &tc,
            |_| Ok(()),
        )
        .unwrap()
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a.params, b.params);
    let strip = |h: &TrainHistory| {
        h.epochs
            .iter()
            .map(|e| (e.train_loss, e.validation_loss))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&ha), strip(&hb));
    assert_eq!((ha.best_epoch, ha.best_loss), (hb.best_epoch, hb.best_loss));
    assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
}

#[test]
fn keeps_best_validation_weights() {
    let s = split(varied(8, 0), varied(3, 50));
    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 2,
        epochs: 20,
        seed: 1,
        checkpoint_every: 5,
    };
    let mut checkpoints = vec![];
    let (model, history) = train(
        build_model(small_config(), stats(), 2).unwrap(),
        &s,
        &tc,
        |e| {
            if let TrainEvent::Checkpoint { epoch, .. } = e {
                checkpoints.push(epoch);
            }
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(checkpoints, [5, 10, 15, 20]);
    let initial = history.initial_validation_loss.unwrap();
    assert!(history.best_loss <= initial);
    let min = history
        .epochs
        .iter()
        .map(|e| e.validation_loss.unwrap())
        .fold(initial, f64::min);
    assert_eq!(history.best_loss, min);
    let reloaded = evaluate_loss(&model, &s.validation, 2).unwrap();
    assert!((reloaded - history.best_loss).abs() <= 1e-12 * history.best_loss.max(1e-30));
    assert_eq!(model.info.best_epoch, history.best_epoch);
    assert_eq!(
        model.info.split.as_ref().unwrap().validation_sources,
        vec![50, 51, 52]
    );
}

#[test]
fn saved_model_predicts_identically() {
    let s = split(varied(4, 0), vec![]);
    let tc = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 2,
        epochs: 3,
        seed: 0,
        checkpoint_every: 0,
    };
    let (model, _) = train(
        build_model(small_config(), stats(), 5).unwrap(),
        &s,
        &tc,
        |_| Ok(()),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.gwnn");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.info, model.info);
    assert_eq!(back.version_tag().unwrap(), model.version_tag().unwrap());
    for p in &s.train {
        let a = model.infer_pair(p).unwrap();
        let b = back.infer_pair(p).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn diverging_run_reports_non_finite_loss() {
    let s = split(varied(4, 0), vec![]);
    let tc = TrainConfig {
        learning_rate: 1e30,
        batch_size: 1,
        epochs: 50,
        seed: 0,
        checkpoint_every: 0,
    };
    let err = train(
        build_model(small_config(), stats(), 5).unwrap(),
        &s,
        &tc,
        |_| Ok(()),
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::NonFiniteLoss { learning_rate, .. } if learning_rate == 1e30),
        "{err:?}"
    );
}

#[test]
fn rejects_mismatched_pairs_and_bad_config() {
    let model = build_model(small_config(), stats(), 0).unwrap();
    let mut p = pair(0, 0.1, 0.1);
    p.nx = 8;
    p.ny = 32;
    let tc = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train(model.clone(), &split(vec![p], vec![]), &tc, |_| Ok(())),
        Err(Error::ShapeMismatch { .. })
    ));
    let bad = TrainConfig {
        batch_size: 0,
        ..tc
    };
    assert!(train(
        model.clone(),
        &split(varied(1, 0), vec![]),
        &bad,
        |_| Ok(())
    )
    .is_err());
    assert!(matches!(
        train(model, &split(vec![], vec![]), &tc, |_| Ok(())),
        Err(Error::InsufficientData(_))
    ));
}
