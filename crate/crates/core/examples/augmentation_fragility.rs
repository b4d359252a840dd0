//! Fine-tunes the reference model with noise and luminance augmentation and
//! measures how much each method's explanation certainty drops.
//!
//!     cargo run --release --example augmentation_fragility -- tests/fixtures/reference.ckpt

use std::time::Instant;

use attrlab::certainty::{BenchmarkSpec, HistogramConfig, Method};
use attrlab::data::synth;
use attrlab::diagnostics::augmentation_fragility;
use attrlab::diff::ScoreMode;
use attrlab::model::{read_checkpoint, AugmentSpec, TrainDuration, TrainSpec};
use attrlab::samplers::SamplerSpec;

fn main() -> attrlab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "tests/fixtures/reference.ckpt".into());
    let base = read_checkpoint(&path)?;
    let (train, test) = synth::reference_corpus()?;
    let aug = AugmentSpec {
        gaussian_sigma_range: [0.1, 0.3],
        luminance_range: [0.1, 0.9],
    };
    let fine_tune = TrainSpec {
        learning_rate: 1e-3,
        batch_size: 8,
        duration: TrainDuration::Batches(5000),
        augmentation: None,
        seed: synth::REFERENCE_SEED,
    };
    let bench = BenchmarkSpec {
        methods: vec![
            Method::new(SamplerSpec::bernoulli(0.7)),
            Method::new(SamplerSpec::gaussian(0.15)),
            Method::new(SamplerSpec::LinearScale),
        ],
        samples: 100,
        image_count: 100,
        seed: synth::REFERENCE_SEED,
        histogram: HistogramConfig::new(32),
        score_mode: ScoreMode::Logit,
        normalize_to_linear_scale: true,
    };
    let t = Instant::now();
    let (report, _) = augmentation_fragility(&base, &train, &test, &aug, &fine_tune, &bench)?;
    println!("fragility run took {:.1?}", t.elapsed());
    println!(
        "accuracy {:.4} -> {:.4}\n",
        report.accuracy_before, report.accuracy_after
    );
    print!("{}", report.to_csv());
    Ok(())
}
