//! Compares tape gradients of a small random network with central finite
//! differences.
//!
//!     cargo run --example gradient_check

use attrlab::diff::{input_gradient, ScoreMode};
use attrlab::model::{init_model, LayerSpec, ModelConfig};
use attrlab::Tensor;

fn main() -> attrlab::Result<()> {
    let config = ModelConfig {
        input_shape: [2, 6, 6],
        layers: vec![
            LayerSpec::Conv { out_channels: 3, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Dense { inputs: 27, units: 5 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 5, units: 4 },
        ],
        class_count: 4,
        seed: 7,
    };
    let ckpt = init_model(config)?;
    let x = Tensor::new(vec![2, 6, 6], (0..72).map(|i| ((i * 37) % 71) as f64 / 71.0).collect())?;
    let class = 2;
    let analytic = input_gradient(&ckpt, &x, class, ScoreMode::Logit)?;

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let shifted = |d: f64| {
            let mut v = x.to_vec();
            v[i] += d;
            Tensor::new(x.shape().to_vec(), v).and_then(|t| ckpt.logits(&t))
        };
        let numeric = (shifted(h)?.data()[class] - shifted(-h)?.data()[class]) / (2.0 * h);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    println!("checked {} input coordinates, worst relative error {worst:.2e}", x.numel());
    Ok(())
}
