//! Sweeps the pixel dropping probability from 0 to 1 and reports where the
//! mean gradient norm and the explanation MI peak.
//!
//!     cargo run --release --example p_sweep -- tests/fixtures/reference.ckpt

use std::time::Instant;

use attrlab::certainty::HistogramConfig;
use attrlab::data::synth;
use attrlab::diagnostics::{p_sweep, unimodality_violations, unit_grid, SweepSpec};
use attrlab::diff::ScoreMode;
use attrlab::model::read_checkpoint;

fn main() -> attrlab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "tests/fixtures/reference.ckpt".into());
    let ckpt = read_checkpoint(&path)?;
    let (_, test) = synth::reference_corpus()?;
    let spec = SweepSpec {
        grid: unit_grid(),
        samples: 100,
        image_count: 100,
        seed: synth::REFERENCE_SEED,
        histogram: HistogramConfig::new(32),
        score_mode: ScoreMode::Logit,
    };
    let t = Instant::now();
    let sweep = p_sweep(&ckpt, &test, &spec)?;
    println!("sweep took {:.1?}\n", t.elapsed());
    print!("{}", sweep.to_csv());
    println!(
        "\ngradient norm peaks at p={} ({} violations), MI peaks at p={} ({} violations)",
        sweep.argmax_grad_norm,
        unimodality_violations(&sweep.mean_grad_norm),
        sweep.argmax_mi,
        unimodality_violations(&sweep.mean_mi)
    );
    Ok(())
}
