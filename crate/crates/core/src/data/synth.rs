//! Procedural handwritten-style digits.
//!
//! Each digit is a set of polyline strokes in a unit box. Every sample gets
//! its own control-point jitter, affine transform, stroke width and ink
//! intensity, and is rendered anti-aliased onto a 28x28 canvas with a black
//! background. Pixels are quantized to the 8-bit grid so a corpus survives a
//! round trip through IDX unchanged.

use std::f64::consts::PI;

use rand::Rng;

use super::Dataset;
use crate::error::Result;
use crate::rng;
use crate::tensor::Tensor;

pub const SIDE: usize = 28;
pub const CLASSES: usize = 10;

/// Seed of the reference corpus.
pub const REFERENCE_SEED: u64 = 1_860_867;
pub const REFERENCE_TRAIN: usize = 6000;
pub const REFERENCE_TEST: usize = 1000;

type Stroke = Vec<(f64, f64)>;

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, steps: usize) -> Stroke {
    (0..=steps)
        .map(|s| {
            let t = from + (to - from) * s as f64 / steps as f64;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

/// Strokes of each digit in a unit box, y pointing down.
fn glyph(digit: usize) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.28, 0.4, 0.0, 2.0 * PI, 20)],
        1 => vec![vec![(0.36, 0.24), (0.52, 0.1), (0.52, 0.9)]],
        2 => {
            let mut s = arc(0.5, 0.32, 0.24, 0.22, PI, 2.1 * PI, 10);
            s.extend([(0.25, 0.9), (0.78, 0.9)]);
            vec![s]
        }
        3 => {
            let mut s = arc(0.48, 0.3, 0.22, 0.2, 1.1 * PI, 2.5 * PI, 10);
            s.extend(arc(0.48, 0.7, 0.25, 0.2, 1.5 * PI, 2.9 * PI, 10));
            vec![s]
        }
        4 => vec![vec![(0.64, 0.9), (0.64, 0.1), (0.2, 0.64), (0.82, 0.64)]],
        5 => {
            let mut s = vec![(0.76, 0.1), (0.32, 0.1), (0.29, 0.46)];
            s.extend(arc(0.48, 0.66, 0.26, 0.23, 1.3 * PI, 2.75 * PI, 10));
            vec![s]
        }
        6 => {
            let mut s = vec![(0.7, 0.1), (0.46, 0.2), (0.31, 0.42)];
            s.extend(arc(0.5, 0.7, 0.22, 0.2, PI, 3.0 * PI, 14));
            vec![s]
        }
        7 => vec![vec![(0.22, 0.1), (0.78, 0.1), (0.44, 0.9)]],
        8 => vec![
            arc(0.5, 0.29, 0.19, 0.19, 0.0, 2.0 * PI, 14),
            arc(0.5, 0.7, 0.24, 0.21, 0.0, 2.0 * PI, 14),
        ],
        9 => {
            let mut s = arc(0.5, 0.32, 0.22, 0.21, 0.0, 2.0 * PI, 14);
            s.extend([(0.68, 0.9)]);
            vec![s]
        }
        _ => unreachable!("digits are 0..=9"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Renders one sample of `digit`, fully determined by `(seed, key)`.
pub fn render_digit(digit: usize, seed: u64, key: u64) -> Vec<f64> {
    let mut rng = rng::keyed_rng(seed, key);
    let angle = rng.random_range(-0.25..0.25);
    let shear = rng.random_range(-0.25..0.25);
    let scale = rng.random_range(17.0..21.0);
    let aspect = rng.random_range(0.8..1.15);
    let (tx, ty) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let radius = rng.random_range(0.9..1.8);
    let ink = rng.random_range(0.75..1.0);
    let (sin, cos) = f64::sin_cos(angle);
    let centre = SIDE as f64 / 2.0;

    let strokes: Vec<Stroke> = glyph(digit)
        .into_iter()
        .map(|stroke| {
            stroke
                .into_iter()
                .map(|(x, y)| {
                    let (jx, jy) = (rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
                    let (u, v) = ((x + jx - 0.5) * scale * aspect, (y + jy - 0.5) * scale);
                    let u = u + shear * v;
                    (centre + tx + cos * u - sin * v, centre + ty + sin * u + cos * v)
                })
                .collect()
        })
        .collect();

    let mut img = vec![0.0; SIDE * SIDE];
    for (i, px) in img.iter_mut().enumerate() {
        let p = ((i % SIDE) as f64 + 0.5, (i / SIDE) as f64 + 0.5);
        let d = strokes
            .iter()
            .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
            .fold(f64::INFINITY, f64::min);
        let coverage = (radius + 0.5 - d).clamp(0.0, 1.0);
        *px = (ink * coverage * 255.0).round() / 255.0;
    }
    img
}

/// `n` images with labels cycling through the ten digits.
pub fn generate(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    let mut data = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let digit = i % CLASSES;
        data.extend(render_digit(digit, seed, i as u64));
        labels.push(digit);
    }
    Dataset::new(name, Tensor::new(vec![n, 1, SIDE, SIDE], data)?, labels, CLASSES)
}

/// The reference train/test split.
pub fn reference_corpus() -> Result<(Dataset, Dataset)> {
    let train = generate("digits-train", REFERENCE_TRAIN, REFERENCE_SEED)?;
    let test = generate("digits-test", REFERENCE_TEST, rng::derive_seed(REFERENCE_SEED, 1))?;
    Ok((train, test))
}
