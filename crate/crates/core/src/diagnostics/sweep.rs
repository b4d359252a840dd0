use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{aggregate, normalize_min_max, sample_gradients, IntegrateSpec};
use crate::certainty::{estimate_mi, HistogramConfig};
use crate::data::{subsample_indices, Dataset};
use crate::diff::ScoreMode;
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::rng;
use crate::samplers::{SampleStream, SamplerSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    /// Mean L2 norm of per-sample input gradients, averaged over images.
    pub mean_grad_norm: Vec<f64>,
    pub mean_mi: Vec<f64>,
    pub argmax_grad_norm: f64,
    pub argmax_mi: f64,
}

impl SweepResult {
    /// `p,gradNorm,miNats` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,gradNorm,miNats\n");
        for ((p, g), m) in self.grid.iter().zip(&self.mean_grad_norm).zip(&self.mean_mi) {
            let _ = writeln!(out, "{p},{g:.16e},{m:.16e}");
        }
        out
    }
}

/// Parameters of a dropping-probability sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub grid: Vec<f64>,
    pub samples: usize,
    pub image_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub score_mode: ScoreMode,
}

/// The grid `0, 0.1, ..., 1.0`.
pub fn unit_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Number of points that break a rise-then-fall shape around the maximum.
pub fn unimodality_violations(values: &[f64]) -> usize {
    let peak = argmax(values);
    let rising = values[..=peak].windows(2).filter(|w| w[1] < w[0]).count();
    let falling = values[peak..].windows(2).filter(|w| w[1] > w[0]).count();
    rising + falling
}

/// For each `p`, integrates Bernoulli-drop gradients over the same seeded
/// image subset and records the mean gradient norm and mean MI.
pub fn p_sweep(ckpt: &Checkpoint, data: &Dataset, spec: &SweepSpec) -> Result<SweepResult> {
    spec.histogram.validate()?;
    if spec.grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    for &p in &spec.grid {
        SamplerSpec::bernoulli(p).validate()?;
    }
    let rows = subsample_indices(data.len(), spec.image_count, spec.seed)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let jobs: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|k| rows.iter().map(move |&r| (k, r)))
        .collect();
    // (grad norm, MI) per (p, image), grid-major
    let cells: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(k, row)| {
            let x = data.image(row)?;
            let y = data.label(row);
            let is = IntegrateSpec {
                sampler: SamplerSpec::bernoulli(spec.grid[k]),
                samples: spec.samples,
                seed: rng::derive_seed(spec.seed, row as u64),
                multiply_by_input: false,
                score_mode: spec.score_mode,
            };
            let stream = SampleStream::new(is.sampler.clone(), x.clone(), is.seed, is.samples)?;
            let grads = sample_gradients(ckpt, &stream, y, is.score_mode)?;
            let norm = grads.iter().map(|g| g.l2_norm()).sum::<f64>() / grads.len() as f64;
            let map = normalize_min_max(&aggregate(ckpt.id(), &x, y, &is, &grads)?);
            Ok((norm, estimate_mi(&x, &map, &spec.histogram)?.mi_nats))
        })
        .collect::<Result<_>>()?;

    let per_p = rows.len();
    let mean = |k: usize, f: fn(&(f64, f64)) -> f64| cells[k * per_p..(k + 1) * per_p].iter().map(f).sum::<f64>() / per_p as f64;
    let mean_grad_norm: Vec<f64> = (0..spec.grid.len()).map(|k| mean(k, |c| c.0)).collect();
    let mean_mi: Vec<f64> = (0..spec.grid.len()).map(|k| mean(k, |c| c.1)).collect();
    Ok(SweepResult {
        argmax_grad_norm: spec.grid[argmax(&mean_grad_norm)],
        argmax_mi: spec.grid[argmax(&mean_mi)],
        grid: spec.grid.clone(),
        mean_grad_norm,
        mean_mi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unimodality_counts() {
        assert_eq!(unimodality_violations(&[1.0, 2.0, 3.0, 2.0, 1.0]), 0);
        assert_eq!(unimodality_violations(&[1.0, 0.5, 3.0, 2.0, 1.0]), 1);
        assert_eq!(unimodality_violations(&[1.0, 0.5, 3.0, 2.0, 2.5]), 2);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn unit_grid_endpoints() {
        let g = unit_grid();
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[5], g[10]), (0.0, 0.5, 1.0));
    }
}
