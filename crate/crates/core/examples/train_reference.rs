//! Trains the reference CNN on the procedural digit corpus and writes the
//! checkpoint.
//!
//!     cargo run --release --example train_reference -- [out.ckpt]

use std::time::Instant;

use attrlab::data::synth;
use attrlab::model::{self, ModelConfig, TrainDuration, TrainSpec};

fn main() -> attrlab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "reference.ckpt".into());
    let (train, test) = synth::reference_corpus()?;
    let config = ModelConfig::reference([1, synth::SIDE, synth::SIDE], synth::CLASSES, synth::REFERENCE_SEED);
    let init = model::init_model(config)?;
    println!("untrained test accuracy {:.4}", model::evaluate(&init, &test)?);

    let spec = TrainSpec {
        learning_rate: 0.05,
        batch_size: 32,
        duration: TrainDuration::Epochs(3),
        augmentation: None,
        seed: synth::REFERENCE_SEED,
    };
    let t = Instant::now();
    let mut trained = model::train(&init, &train, &spec)?;
    trained.train_meta.test_accuracy = Some(model::evaluate(&trained, &test)?);
    println!("trained in {:.1?}", t.elapsed());
    println!("epoch losses {:?}", trained.train_meta.loss_history);
    println!(
        "train accuracy {:.4}, test accuracy {:.4}",
        trained.train_meta.train_accuracy.unwrap_or(f64::NAN),
        trained.train_meta.test_accuracy.unwrap_or(f64::NAN)
    );
    model::write_checkpoint(&trained, &out)?;
    println!("wrote {out} (id {})", trained.id());
    Ok(())
}
