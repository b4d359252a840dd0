use std::path::PathBuf;

use attrlab::data::{load_idx, synth, write_idx};
use attrlab::model::{
    evaluate, init_model, read_checkpoint, train, Checkpoint, LayerSpec, ModelConfig, TrainDuration, TrainSpec,
};
use attrlab::Tensor;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn reference_config() -> ModelConfig {
    ModelConfig::reference([1, synth::SIDE, synth::SIDE], synth::CLASSES, synth::REFERENCE_SEED)
}

fn reference_spec() -> TrainSpec {
    TrainSpec {
        learning_rate: 0.05,
        batch_size: 32,
        duration: TrainDuration::Epochs(3),
        augmentation: None,
        seed: synth::REFERENCE_SEED,
    }
}

#[test]
fn untrained_model_is_at_chance() {
    let (_, test) = synth::reference_corpus().unwrap();
    let acc = evaluate(&init_model(reference_config()).unwrap(), &test).unwrap();
    assert!((acc - 0.1).abs() <= 0.05, "untrained accuracy {acc}");
}

#[test]
fn reference_training_reproduces_the_pinned_checkpoint() {
    let (train_set, test) = synth::reference_corpus().unwrap();
    let init = init_model(reference_config()).unwrap();
    let trained = train(&init, &train_set, &reference_spec()).unwrap();

    let pinned = read_checkpoint(fixture("reference.ckpt")).unwrap();
    assert_eq!(trained.params(), pinned.params(), "training is not bit-reproducible");
    assert_eq!(trained.id(), pinned.id());

    let acc = evaluate(&trained, &test).unwrap();
    assert!(acc >= 0.95, "test accuracy {acc}");
    let recorded = pinned.train_meta.test_accuracy.unwrap();
    assert!((acc - recorded).abs() <= 0.02, "accuracy {acc} drifted from pinned {recorded}");

    let losses = &trained.train_meta.loss_history;
    assert_eq!(losses.len(), 3);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "epoch losses not decreasing: {losses:?}");
}

#[test]
fn checkpoint_roundtrip_predicts_identically() {
    let ckpt = read_checkpoint(fixture("reference.ckpt")).unwrap();
    let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
    assert_eq!(back, ckpt);
    let (_, test) = synth::reference_corpus().unwrap();
    for i in 0..20 {
        let x = test.image(i).unwrap();
        assert_eq!(ckpt.predict(&x).unwrap(), back.predict(&x).unwrap());
    }
}

#[test]
fn predictions_are_distributions_and_mostly_right() {
    let ckpt = read_checkpoint(fixture("reference.ckpt")).unwrap();
    let (train_set, _) = synth::reference_corpus().unwrap();
    let mut correct = 0;
    for i in 0..200 {
        let p = ckpt.predict(&train_set.image(i).unwrap()).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-9);
        assert!(p.data().iter().all(|&v| v >= 0.0));
        correct += usize::from(p.argmax() == train_set.label(i));
    }
    assert!(correct >= 190, "{correct}/200 correct");
}

#[test]
fn logits_are_the_last_layer_of_the_embedding() {
    let ckpt = read_checkpoint(fixture("reference.ckpt")).unwrap();
    let (_, test) = synth::reference_corpus().unwrap();
    let x = test.image(3).unwrap();
    let e = ckpt.embedding(&x).unwrap();
    assert_eq!(e.numel(), ckpt.config().embedding_dim().unwrap());
    let last = ckpt.config().layers.len() - 1;
    let w = ckpt.param(&format!("layer{last}.weight")).unwrap();
    let b = ckpt.param(&format!("layer{last}.bias")).unwrap();
    let n = e.numel();
    // recomputed outside the tape: bias plus the in-order dot product
    let manual: Vec<f64> = (0..ckpt.class_count())
        .map(|k| b.data()[k] + (0..n).map(|j| w.data()[k * n + j] * e.data()[j]).sum::<f64>())
        .collect();
    assert_eq!(ckpt.logits(&x).unwrap().data(), manual.as_slice());
}

#[test]
fn zero_weights_give_uniform_predictions() {
    let ckpt = Checkpoint::zeroed(reference_config()).unwrap();
    let p = ckpt.predict(&Tensor::full(&[1, 28, 28], 0.3)).unwrap();
    assert!(p.data().iter().all(|&v| (v - 0.1).abs() < 1e-15));
}

#[test]
fn inconsistent_configs_are_rejected() {
    let mut bad = reference_config();
    bad.layers[6] = LayerSpec::Dense { inputs: 100, units: 64 };
    assert!(init_model(bad).is_err());
    let mut wrong_head = reference_config();
    wrong_head.class_count = 7;
    assert!(init_model(wrong_head).is_err());
}

#[test]
fn idx_roundtrip_of_the_digit_corpus() {
    let data = synth::generate("small", 30, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    write_idx(&data, &img, &lab).unwrap();
    let back = load_idx(&img, &lab).unwrap();
    assert_eq!(back.images(), data.images());
    assert_eq!(back.labels(), data.labels());
}
