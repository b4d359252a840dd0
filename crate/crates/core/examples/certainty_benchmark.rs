//! Scores four sampling distributions by explanation certainty on the
//! reference model and reports paired per-image wins of Bernoulli dropping.
//!
//!     cargo run --release --example certainty_benchmark -- tests/fixtures/reference.ckpt

use std::time::Instant;

use attrlab::certainty::{benchmark, BenchmarkSpec, HistogramConfig, Method};
use attrlab::data::synth;
use attrlab::diff::ScoreMode;
use attrlab::model::read_checkpoint;
use attrlab::samplers::SamplerSpec;

fn main() -> attrlab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "tests/fixtures/reference.ckpt".into());
    let ckpt = read_checkpoint(&path)?;
    let (_, test) = synth::reference_corpus()?;
    let spec = BenchmarkSpec {
        methods: vec![
            Method::new(SamplerSpec::bernoulli(0.7)),
            Method::new(SamplerSpec::gaussian(0.15)),
            Method::new(SamplerSpec::Identity),
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
    let table = benchmark(&ckpt, &test, &spec)?;
    println!("benchmark took {:.1?}\n", t.elapsed());
    print!("{}", table.to_csv());

    let ours = &table.rows[0];
    println!();
    for other in &table.rows[1..] {
        let wins = ours
            .per_image_mi
            .iter()
            .zip(&other.per_image_mi)
            .filter(|(a, b)| a > b)
            .count();
        println!("{} beats {} on {wins}/{} images", ours.method, other.method, ours.image_count);
    }
    Ok(())
}
