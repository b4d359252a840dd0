//! Explains one test digit with every sampler and writes a heatmap per
//! method, alongside the input itself.
//!
//!     cargo run --release --example explain_digit -- tests/fixtures/reference.ckpt [index] [out_dir]

use std::path::PathBuf;

use attrlab::attribution::{integrate, normalize_min_max, IntegrateSpec};
use attrlab::certainty::{estimate_mi, HistogramConfig};
use attrlab::data::synth;
use attrlab::model::read_checkpoint;
use attrlab::render;
use attrlab::samplers::SamplerSpec;

fn main() -> attrlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = read_checkpoint(args.next().unwrap_or_else(|| "tests/fixtures/reference.ckpt".into()))?;
    let index: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "explain_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| attrlab::Error::Io { path: out.clone(), source: e })?;

    let (_, test) = synth::reference_corpus()?;
    let x = test.image(index)?;
    let y = test.label(index);
    let probs = ckpt.predict(&x)?;
    println!("image {index}: label {y}, predicted {} (p={:.3})", probs.argmax(), probs.data()[probs.argmax()]);

    let input = x.reshape(vec![synth::SIDE, synth::SIDE])?;
    std::fs::write(out.join("input.pgm"), render::pgm_bytes(&input)?)
        .map_err(|e| attrlab::Error::Io { path: out.join("input.pgm"), source: e })?;

    let cfg = HistogramConfig::new(32);
    for (stem, sampler) in [
        ("bernoulli", SamplerSpec::bernoulli(0.7)),
        ("gaussian", SamplerSpec::gaussian(0.15)),
        ("vanilla", SamplerSpec::Identity),
        ("linear", SamplerSpec::LinearScale),
    ] {
        let spec = IntegrateSpec::new(sampler, 50, synth::REFERENCE_SEED);
        let map = normalize_min_max(&integrate(&ckpt, &x, y, &spec)?);
        let mi = estimate_mi(&x, &map, &cfg)?;
        let path = out.join(format!("{stem}.png"));
        render::render_heatmap(&map, &path, 8)?;
        println!(
            "{:<28} MI {:.4} nats, bound {:.4}, mean SE {:.2e} -> {}",
            map.meta.sampler.label(),
            mi.mi_nats,
            mi.certainty_lower_bound,
            map.meta.standard_error,
            path.display()
        );
    }
    Ok(())
}
