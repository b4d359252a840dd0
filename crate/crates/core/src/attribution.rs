//! Gradient integration: the expected absolute input gradient of the class
//! score over samples drawn around the input.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{input_gradient, ScoreMode};
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::samplers::{SampleStream, SamplerSpec};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionMeta {
    pub model_id: String,
    pub sampler: SamplerSpec,
    pub samples: usize,
    pub seed: u64,
    pub multiply_by_input: bool,
    pub class: usize,
    pub score_mode: ScoreMode,
    /// Mean over coordinates of the per-coordinate standard error of the
    /// averaged quantity.
    pub standard_error: f64,
    pub normalized: bool,
}

/// A per-pixel relevance map of shape `(h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMap {
    /// Current map; equal to `raw` until normalized.
    pub values: Tensor,
    /// Channel-reduced integration result before any normalization.
    pub raw: Tensor,
    pub meta: AttributionMeta,
}

/// Parameters of one integration run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrateSpec {
    pub sampler: SamplerSpec,
    pub samples: usize,
    pub seed: u64,
    pub multiply_by_input: bool,
    #[serde(default)]
    pub score_mode: ScoreMode,
}

impl IntegrateSpec {
    pub fn new(sampler: SamplerSpec, samples: usize, seed: u64) -> Self {
        Self {
            sampler,
            samples,
            seed,
            multiply_by_input: false,
            score_mode: ScoreMode::Logit,
        }
    }
}

/// Per-sample input gradients in sample order, computed in parallel.
/// The first non-finite gradient (by index) aborts the run.
pub fn sample_gradients(ckpt: &Checkpoint, stream: &SampleStream, y: usize, mode: ScoreMode) -> Result<Vec<Tensor>> {
    let results: Vec<Result<Tensor>> = (0..stream.count())
        .into_par_iter()
        .map(|i| {
            let g = input_gradient(ckpt, &stream.draw(i)?, y, mode)?;
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::NonFiniteGradient { sample: i })
            }
        })
        .collect();
    results.into_iter().collect()
}

/// Integrates gradients of class `y` over `spec.samples` draws around `x`.
///
/// Without input gating the result is the mean of `|grad|`; with gating it
/// is `|x * mean(grad)|`. Either way it is reduced over channels by the
/// maximum absolute value.
pub fn integrate(ckpt: &Checkpoint, x: &Tensor, y: usize, spec: &IntegrateSpec) -> Result<AttributionMap> {
    ckpt.check_input(x)?;
    ckpt.check_class(y)?;
    let stream = SampleStream::new(spec.sampler.clone(), x.clone(), spec.seed, spec.samples)?;
    // Identity draws are all the same input, so one gradient is the exact mean.
    let effective = match spec.sampler {
        SamplerSpec::Identity => SampleStream::new(SamplerSpec::Identity, x.clone(), spec.seed, 1)?,
        _ => stream,
    };
    let grads = sample_gradients(ckpt, &effective, y, spec.score_mode)?;
    aggregate(ckpt.id(), x, y, spec, &grads)
}

/// Builds the map from per-sample gradients already computed for `spec`.
pub fn aggregate(model_id: &str, x: &Tensor, y: usize, spec: &IntegrateSpec, grads: &[Tensor]) -> Result<AttributionMap> {
    let integrated = if spec.multiply_by_input {
        let (mean, se) = mean_and_standard_error(grads)?;
        let gated = mean.zip_with(x, |g, v| (g * v).abs())?;
        (gated, se)
    } else {
        let abs: Vec<Tensor> = grads.iter().map(Tensor::abs).collect();
        mean_and_standard_error(&abs)?
    };
    let raw = channel_reduce(&integrated.0)?;
    Ok(AttributionMap {
        values: raw.clone(),
        raw,
        meta: AttributionMeta {
            model_id: model_id.to_string(),
            sampler: spec.sampler.clone(),
            samples: spec.samples,
            seed: spec.seed,
            multiply_by_input: spec.multiply_by_input,
            class: y,
            score_mode: spec.score_mode,
            standard_error: integrated.1,
            normalized: false,
        },
    })
}

/// Elementwise mean by a pairwise tree of weighted partial means, plus the
/// average per-coordinate standard error.
///
/// Partial means combine as `m_l + (m_r - m_l) * n_r / n`, so averaging
/// identical tensors reproduces them exactly.
fn mean_and_standard_error(items: &[Tensor]) -> Result<(Tensor, f64)> {
    let mean = pairwise_mean(items)?;
    let n = items.len();
    if n < 2 {
        return Ok((mean, 0.0));
    }
    let sq: Vec<Tensor> = items
        .iter()
        .map(|t| t.zip_with(&mean, |v, m| (v - m) * (v - m)))
        .collect::<Result<_>>()?;
    let var = pairwise_mean(&sq)?;
    let scale = n as f64 / (n as f64 - 1.0) / n as f64;
    let se = var.data().iter().map(|v| (v * scale).sqrt()).sum::<f64>() / var.numel() as f64;
    Ok((mean, se))
}

pub(crate) fn pairwise_mean(items: &[Tensor]) -> Result<Tensor> {
    match items {
        [] => Err(Error::InvalidParameter("mean over zero tensors".into())),
        [only] => Ok(only.clone()),
        _ => {
            let mid = items.len() / 2;
            let left = pairwise_mean(&items[..mid])?;
            let right = pairwise_mean(&items[mid..])?;
            let w = (items.len() - mid) as f64 / items.len() as f64;
            left.zip_with(&right, |l, r| l + (r - l) * w)
        }
    }
}

/// `(c, h, w)` to `(h, w)` by the per-location maximum absolute value.
/// A rank-2 tensor is treated as a single channel.
pub fn channel_reduce(g: &Tensor) -> Result<Tensor> {
    let (c, h, w) = match *g.shape() {
        [c, h, w] => (c, h, w),
        [h, w] => (1, h, w),
        _ => {
            return Err(Error::InvalidTensor(format!(
                "channel reduction needs (c, h, w), got {:?}",
                g.shape()
            )))
        }
    };
    let plane = h * w;
    let data = (0..plane)
        .map(|p| (0..c).map(|ch| g.data()[ch * plane + p].abs()).fold(0.0, f64::max))
        .collect();
    Ok(Tensor::from_parts(vec![h, w], data))
}

/// Min-max rescale of `values` to `[0, 1]`; a constant map becomes all 0.5.
pub fn normalize_min_max(map: &AttributionMap) -> AttributionMap {
    let (lo, hi) = (map.values.min(), map.values.max());
    let values = if hi > lo {
        map.values.map(|v| (v - lo) / (hi - lo))
    } else {
        map.values.map(|_| 0.5)
    };
    AttributionMap {
        values,
        raw: map.raw.clone(),
        meta: AttributionMeta {
            normalized: true,
            ..map.meta.clone()
        },
    }
}

/// Row-major CSV grid, 17 significant digits per value.
pub fn grid_csv(t: &Tensor) -> Result<String> {
    let [h, w] = *t.shape() else {
        return Err(Error::InvalidTensor(format!("CSV grid needs (h, w), got {:?}", t.shape())));
    };
    let mut out = String::with_capacity(h * w * 24);
    for row in t.data().chunks(w) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses a grid written by [`grid_csv`].
pub fn parse_grid_csv(text: &str) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let before = data.len();
        for cell in line.split(',') {
            data.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidTensor(format!("bad CSV cell {cell:?}: {e}")))?,
            );
        }
        let w = data.len() - before;
        if *width.get_or_insert(w) != w {
            return Err(Error::InvalidTensor("ragged CSV grid".into()));
        }
        rows += 1;
    }
    Tensor::new(vec![rows, width.unwrap_or(0)], data)
}

impl AttributionMap {
    /// Writes `<stem>.csv` (current values) and `<stem>.json` (meta).
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, grid_csv(&self.values)?).map_err(|e| Error::io(&csv, e))?;
        let meta = serde_json::to_string_pretty(&self.meta)?;
        fs::write(&json, meta + "\n").map_err(|e| Error::io(&json, e))?;
        Ok(vec![csv, json])
    }
}
