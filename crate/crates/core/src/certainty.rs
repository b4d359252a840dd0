//! Explanation certainty: binned plug-in mutual information between an
//! input and its attribution map, the input entropy, and the certainty lower
//! bound `exp(I(x; z) - H(x))`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{integrate, normalize_min_max, AttributionMap, IntegrateSpec};
use crate::data::{subsample_indices, Dataset};
use crate::diff::ScoreMode;
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::rng;
use crate::samplers::SamplerSpec;
use crate::tensor::Tensor;

/// Slack allowed between a mutual-information estimate and an entropy.
pub const ESTIMATOR_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    #[default]
    PerImage,
    Corpus,
}

/// Equal-width bins over `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub bins: usize,
    #[serde(default)]
    pub pooling: Pooling,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            pooling: Pooling::PerImage,
        }
    }
}

impl HistogramConfig {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 bins, got {}", self.bins)));
        }
        Ok(())
    }

    fn bin(&self, v: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { value: v });
        }
        Ok(((v * self.bins as f64) as usize).min(self.bins - 1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub mi_nats: f64,
    pub entropy_x_nats: f64,
    pub entropy_z_nats: f64,
    pub conditional_entropy_nats: f64,
    pub certainty_lower_bound: f64,
    pub sample_count: usize,
    pub config: HistogramConfig,
}

/// `-sum p ln p` over counts, with `0 ln 0 = 0`.
fn entropy_of_counts(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Plug-in entropy of the binned values of `x`, in nats.
pub fn entropy(x: &Tensor, cfg: &HistogramConfig) -> Result<f64> {
    cfg.validate()?;
    let mut counts = vec![0u64; cfg.bins];
    for &v in x.data() {
        counts[cfg.bin(v)?] += 1;
    }
    Ok(entropy_of_counts(&counts, x.numel() as u64))
}

/// `exp(mi - hx)`, the lower bound on `Pr(x | z)`.
pub fn certainty_bound(mi: f64, hx: f64) -> Result<f64> {
    if mi > hx + ESTIMATOR_TOLERANCE {
        return Err(Error::EstimatorInconsistency { mi, entropy: hx });
    }
    Ok((mi - hx).exp())
}

/// Reduces `(3, h, w)` to luminance and `(1, h, w)` to its plane.
pub fn luminance(x: &Tensor) -> Result<Tensor> {
    match *x.shape() {
        [h, w] => Ok(x.reshape(vec![h, w])?),
        [1, h, w] => x.reshape(vec![h, w]),
        [3, h, w] => {
            let plane = h * w;
            let d = x.data();
            let data = (0..plane)
                .map(|p| (0.299 * d[p] + 0.587 * d[plane + p] + 0.114 * d[2 * plane + p]).clamp(0.0, 1.0))
                .collect();
            Ok(Tensor::from_parts(vec![h, w], data))
        }
        _ => Err(Error::InvalidTensor(format!(
            "expected a 1- or 3-channel image, got {:?}",
            x.shape()
        ))),
    }
}

/// Joint histogram accumulated over one or more `(x, z)` pairs.
struct JointHistogram {
    cfg: HistogramConfig,
    joint: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    fn new(cfg: HistogramConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            joint: vec![0; cfg.bins * cfg.bins],
            total: 0,
        })
    }

    fn add(&mut self, x: &Tensor, z: &Tensor) -> Result<()> {
        let xl = luminance(x)?;
        if xl.shape() != z.shape() {
            return Err(Error::ShapeMismatch {
                primitive: "estimate_mi",
                left: xl.shape().to_vec(),
                right: z.shape().to_vec(),
            });
        }
        for (&a, &b) in xl.data().iter().zip(z.data()) {
            let (i, j) = (self.cfg.bin(a)?, self.cfg.bin(b)?);
            self.joint[i * self.cfg.bins + j] += 1;
        }
        self.total += xl.numel() as u64;
        Ok(())
    }

    fn estimate(&self) -> Result<MiEstimate> {
        let b = self.cfg.bins;
        if self.total == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut px = vec![0u64; b];
        let mut pz = vec![0u64; b];
        for i in 0..b {
            for j in 0..b {
                let c = self.joint[i * b + j];
                px[i] += c;
                pz[j] += c;
            }
        }
        let n = self.total as f64;
        let mut mi = 0.0;
        for i in 0..b {
            for j in 0..b {
                let c = self.joint[i * b + j];
                if c == 0 {
                    continue;
                }
                let ratio = (c as f64 * n) / (px[i] as f64 * pz[j] as f64);
                mi += c as f64 / n * ratio.ln();
            }
        }
        let hx = entropy_of_counts(&px, self.total);
        let hz = entropy_of_counts(&pz, self.total);
        // clamp rounding dust into the feasible range [0, min(H(x), H(z))]
        let mi = mi.max(0.0).min(hx).min(hz);
        let bound = certainty_bound(mi, hx)?;
        Ok(MiEstimate {
            mi_nats: mi,
            entropy_x_nats: hx,
            entropy_z_nats: hz,
            conditional_entropy_nats: hx - mi,
            certainty_lower_bound: bound,
            sample_count: self.total as usize,
            config: self.cfg,
        })
    }
}

/// Plug-in mutual information between the pixels of `x` and of the map `z`.
pub fn estimate_mi_tensors(x: &Tensor, z: &Tensor, cfg: &HistogramConfig) -> Result<MiEstimate> {
    let mut h = JointHistogram::new(*cfg)?;
    h.add(x, z)?;
    h.estimate()
}

/// Mutual information between an input and an attribution map's values.
pub fn estimate_mi(x: &Tensor, z: &AttributionMap, cfg: &HistogramConfig) -> Result<MiEstimate> {
    estimate_mi_tensors(x, &z.values, cfg)
}

/// One estimate over all pixel pairs of all `(x, z)` pairs.
pub fn estimate_mi_pooled(pairs: &[(Tensor, Tensor)], cfg: &HistogramConfig) -> Result<MiEstimate> {
    let mut h = JointHistogram::new(*cfg)?;
    for (x, z) in pairs {
        h.add(x, z)?;
    }
    h.estimate()
}

/// An attribution method under benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Method {
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub multiply_by_input: bool,
}

impl Method {
    pub fn new(sampler: SamplerSpec) -> Self {
        Self {
            sampler,
            multiply_by_input: false,
        }
    }

    pub fn name(&self) -> String {
        if self.multiply_by_input {
            format!("{}*input", self.sampler.label())
        } else {
            self.sampler.label()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub methods: Vec<Method>,
    pub samples: usize,
    pub image_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub score_mode: ScoreMode,
    /// Divide every method's mean by the LinearScale method's mean.
    #[serde(default = "yes")]
    pub normalize_to_linear_scale: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub spec: Method,
    pub mean_mi_nats: f64,
    pub normalized_to_ig: Option<f64>,
    pub stddev: f64,
    pub image_count: usize,
    pub per_image_mi: Vec<f64>,
    pub per_image: Vec<MiEstimate>,
    /// Present for corpus pooling: the single pooled estimate.
    pub pooled: Option<MiEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub model_id: String,
    pub seed: u64,
    pub samples: usize,
    pub image_indices: Vec<usize>,
    pub histogram: HistogramConfig,
    pub rows: Vec<BenchmarkRow>,
}

/// Scores each method by the mean input/explanation mutual information over
/// a seeded image sample. Maps are min-max normalized before binning.
pub fn benchmark(ckpt: &Checkpoint, data: &Dataset, spec: &BenchmarkSpec) -> Result<BenchmarkTable> {
    spec.histogram.validate()?;
    let reference = spec.methods.iter().position(|m| m.sampler == SamplerSpec::LinearScale);
    if spec.normalize_to_linear_scale && reference.is_none() {
        return Err(Error::MissingReferenceMethod);
    }
    if spec.methods.is_empty() {
        return Err(Error::InvalidParameter("benchmark needs at least one method".into()));
    }
    let indices = subsample_indices(data.len(), spec.image_count, spec.seed)?;
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }

    // images x methods, image-major; each image uses one seed for all methods
    let per_image: Vec<Vec<(MiEstimate, Tensor)>> = indices
        .par_iter()
        .map(|&row| {
            let x = data.image(row)?;
            let y = data.label(row);
            let seed = rng::derive_seed(spec.seed, row as u64);
            spec.methods
                .iter()
                .map(|m| {
                    let is = IntegrateSpec {
                        sampler: m.sampler.clone(),
                        samples: spec.samples,
                        seed,
                        multiply_by_input: m.multiply_by_input,
                        score_mode: spec.score_mode,
                    };
                    let map = normalize_min_max(&integrate(ckpt, &x, y, &is)?);
                    Ok((estimate_mi(&x, &map, &spec.histogram)?, map.values))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(spec.methods.len());
    for (k, method) in spec.methods.iter().enumerate() {
        let estimates: Vec<MiEstimate> = per_image.iter().map(|r| r[k].0.clone()).collect();
        let mis: Vec<f64> = estimates.iter().map(|e| e.mi_nats).collect();
        let pooled = match spec.histogram.pooling {
            Pooling::PerImage => None,
            Pooling::Corpus => {
                let pairs: Vec<(Tensor, Tensor)> = indices
                    .iter()
                    .zip(&per_image)
                    .map(|(&row, r)| Ok((data.image(row)?, r[k].1.clone())))
                    .collect::<Result<_>>()?;
                Some(estimate_mi_pooled(&pairs, &spec.histogram)?)
            }
        };
        let mean = match &pooled {
            Some(p) => p.mi_nats,
            None => mis.iter().sum::<f64>() / mis.len() as f64,
        };
        rows.push(BenchmarkRow {
            method: method.name(),
            spec: method.clone(),
            mean_mi_nats: mean,
            normalized_to_ig: None,
            stddev: sample_std(&mis),
            image_count: mis.len(),
            per_image_mi: mis,
            per_image: estimates,
            pooled,
        });
    }
    if spec.normalize_to_linear_scale {
        let denom = rows[reference.expect("checked above")].mean_mi_nats;
        for r in &mut rows {
            r.normalized_to_ig = Some(r.mean_mi_nats / denom);
        }
    }
    Ok(BenchmarkTable {
        model_id: ckpt.id().to_string(),
        seed: spec.seed,
        samples: spec.samples,
        image_indices: indices,
        histogram: spec.histogram,
        rows,
    })
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl BenchmarkTable {
    pub fn row(&self, method: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `method,meanMI_nats,normalizedToIG,stddev,imageCount`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,meanMI_nats,normalizedToIG,stddev,imageCount\n");
        for r in &self.rows {
            let norm = r.normalized_to_ig.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(
                out,
                "{},{:.16e},{},{:.16e},{}",
                csv_field(&r.method),
                r.mean_mi_nats,
                norm,
                r.stddev,
                r.image_count
            )
            .expect("writing to a String");
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` (the latter with per-image arrays).
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))?;
        Ok(vec![csv, json])
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
