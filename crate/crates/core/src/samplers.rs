//! Sampling distributions that derive perturbed copies of an input.
//!
//! Sample `i` of a [`SampleStream`] is a pure function of the sampler, the
//! base input, the seed and `i`: each index reads its own counter-based
//! random stream, so samples can be drawn in any order or in parallel.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

fn default_clamp() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// Each pixel site is independently zeroed with probability `p`.
    BernoulliDrop { p: f64 },
    /// Additive i.i.d. normal noise, optionally clamped back into `[0, 1]`.
    GaussianNoise {
        sigma: f64,
        #[serde(default = "default_clamp")]
        clamp_to_range: bool,
    },
    /// Sample `i` of `n` is the input scaled by `(i + 1) / n`.
    LinearScale,
    Identity,
}

impl SamplerSpec {
    pub fn bernoulli(p: f64) -> Self {
        SamplerSpec::BernoulliDrop { p }
    }

    pub fn gaussian(sigma: f64) -> Self {
        SamplerSpec::GaussianNoise {
            sigma,
            clamp_to_range: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplerSpec::BernoulliDrop { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::InvalidParameter(format!("drop probability {p} outside [0, 1]")))
            }
            SamplerSpec::GaussianNoise { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidParameter(format!("noise sigma {sigma} must be >= 0")))
            }
            _ => Ok(()),
        }
    }

    /// Short stable identifier, used as a group or method name.
    pub fn label(&self) -> String {
        match self {
            SamplerSpec::BernoulliDrop { p } => format!("bernoulli-drop(p={p})"),
            SamplerSpec::GaussianNoise { sigma, clamp_to_range } => {
                if *clamp_to_range {
                    format!("gaussian-noise(sigma={sigma})")
                } else {
                    format!("gaussian-noise(sigma={sigma},unclamped)")
                }
            }
            SamplerSpec::LinearScale => "linear-scale".into(),
            SamplerSpec::Identity => "identity".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SampleStream {
    spec: SamplerSpec,
    base: Tensor,
    seed: u64,
    count: usize,
}

impl SampleStream {
    pub fn new(spec: SamplerSpec, base: Tensor, seed: u64, count: usize) -> Result<Self> {
        spec.validate()?;
        if count == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        Ok(Self { spec, base, seed, count })
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn base(&self) -> &Tensor {
        &self.base
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Sample `index`, shaped like the base input.
    pub fn draw(&self, index: usize) -> Result<Tensor> {
        if index >= self.count {
            return Err(Error::SampleOutOfRange {
                index,
                count: self.count,
            });
        }
        let x = &self.base;
        Ok(match self.spec {
            SamplerSpec::Identity => x.clone(),
            SamplerSpec::LinearScale => {
                let alpha = (index + 1) as f64 / self.count as f64;
                x.map(|v| alpha * v)
            }
            SamplerSpec::BernoulliDrop { p } => {
                let mut rng = rng::keyed_rng(self.seed, index as u64);
                // one trial per spatial site, shared by all channels
                let (channels, sites) = match x.shape() {
                    [c, h, w] => (*c, h * w),
                    _ => (1, x.numel()),
                };
                let keep: Vec<bool> = (0..sites).map(|_| rng.random::<f64>() >= p).collect();
                let data = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| if keep[i % sites] { v } else { 0.0 })
                    .collect();
                debug_assert_eq!(channels * sites, x.numel());
                Tensor::from_parts(x.shape().to_vec(), data)
            }
            SamplerSpec::GaussianNoise { sigma, clamp_to_range } => {
                let mut rng = rng::keyed_rng(self.seed, index as u64);
                let data = x
                    .data()
                    .iter()
                    .map(|&v| {
                        let eps: f64 = rng.sample(StandardNormal);
                        let s = v + sigma * eps;
                        if clamp_to_range {
                            s.clamp(0.0, 1.0)
                        } else {
                            s
                        }
                    })
                    .collect();
                Tensor::from_parts(x.shape().to_vec(), data)
            }
        })
    }
}

/// Fraction of the base's nonzero coordinates that the sample left intact.
pub fn kept_fraction(sample: &Tensor, base: &Tensor) -> Result<f64> {
    if sample.shape() != base.shape() {
        return Err(Error::ShapeMismatch {
            primitive: "kept_fraction",
            left: sample.shape().to_vec(),
            right: base.shape().to_vec(),
        });
    }
    let (mut support, mut kept) = (0usize, 0usize);
    for (&s, &b) in sample.data().iter().zip(base.data()) {
        if b != 0.0 {
            support += 1;
            if s == b {
                kept += 1;
            }
        }
    }
    if support == 0 {
        return Err(Error::InvalidParameter("base has no nonzero coordinates".into()));
    }
    Ok(kept as f64 / support as f64)
}
