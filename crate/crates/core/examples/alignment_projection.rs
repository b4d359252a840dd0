//! Projects penultimate-layer embeddings of natural digits and of sampled
//! inputs with cosine-kernel PCA, then compares group centroids.
//!
//!     cargo run --release --example alignment_projection -- tests/fixtures/reference.ckpt [out.png]

use std::time::Instant;

use attrlab::data::synth;
use attrlab::diagnostics::alignment_study;
use attrlab::model::read_checkpoint;
use attrlab::render::scatter_plot;
use attrlab::samplers::SamplerSpec;

fn main() -> attrlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "tests/fixtures/reference.ckpt".into());
    let plot = args.next();
    let ckpt = read_checkpoint(&path)?;
    let (_, test) = synth::reference_corpus()?;
    let samplers = [
        SamplerSpec::bernoulli(0.7),
        SamplerSpec::gaussian(0.5),
        SamplerSpec::gaussian(0.9),
    ];
    let t = Instant::now();
    let proj = alignment_study(&ckpt, &test, &samplers, 1000, synth::REFERENCE_SEED)?;
    println!("projection of {} points took {:.1?}\n", proj.points.len(), t.elapsed());
    print!("{}", proj.centroids_csv());
    if let Some(out) = plot {
        let groups: Vec<usize> = (0..proj.points.len()).map(|i| proj.group_index(i)).collect();
        scatter_plot(&proj.points, &groups, &proj.centroids, 480).write_png(out.as_ref())?;
        println!("\nwrote {out}");
    }
    Ok(())
}
