use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, TrainMeta};
use crate::data::Dataset;
use crate::diff::Tape;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{pairwise_sum, pairwise_sum_tensors, Tensor};

/// Random photometric perturbations applied to each training image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    /// Additive Gaussian noise std, drawn uniformly per image.
    pub gaussian_sigma_range: [f64; 2],
    /// Multiplicative luminance factor, drawn uniformly per image.
    pub luminance_range: [f64; 2],
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("gaussian_sigma_range", self.gaussian_sigma_range),
            ("luminance_range", self.luminance_range),
        ] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} [{lo}, {hi}] needs 0 <= low <= high")));
            }
        }
        Ok(())
    }

    fn apply(&self, x: &Tensor, rng: &mut impl Rng) -> Tensor {
        let sigma = draw(rng, self.gaussian_sigma_range);
        let lum = draw(rng, self.luminance_range);
        let data = x
            .data()
            .iter()
            .map(|&v| {
                let noise: f64 = rng.sample(StandardNormal);
                (v * lum + sigma * noise).clamp(0.0, 1.0)
            })
            .collect();
        Tensor::from_parts(x.shape().to_vec(), data)
    }
}

fn draw(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainDuration {
    Epochs(u32),
    Batches(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub duration: TrainDuration,
    pub augmentation: Option<AugmentSpec>,
    pub seed: u64,
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if let Some(aug) = &self.augmentation {
            aug.validate()?;
        }
        Ok(())
    }
}

/// Plain minibatch SGD on softmax cross-entropy.
///
/// Per-sample gradients are computed independently and reduced in batch
/// order, so the result does not depend on the rayon pool size.
pub fn train(ckpt: &Checkpoint, data: &Dataset, spec: &TrainSpec) -> Result<Checkpoint> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.image_shape() != ckpt.config().input_shape {
        return Err(Error::ShapeMismatch {
            primitive: "train",
            left: data.image_shape().to_vec(),
            right: ckpt.config().input_shape.to_vec(),
        });
    }
    if data.class_count() > ckpt.class_count() {
        return Err(Error::ClassOutOfRange {
            index: data.class_count() - 1,
            classes: ckpt.class_count(),
        });
    }
    let n = data.len();
    let batches_per_epoch = n.div_ceil(spec.batch_size) as u64;
    let total_batches = match spec.duration {
        TrainDuration::Epochs(e) => u64::from(e) * batches_per_epoch,
        TrainDuration::Batches(b) => b,
    };

    let mut params: Vec<Tensor> = ckpt.params().iter().map(|p| p.value.clone()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::new();
    let mut losses = Vec::new();
    for batch in 0..total_batches {
        let epoch = batch / batches_per_epoch;
        let pos = (batch % batches_per_epoch) as usize;
        if pos == 0 {
            order = (0..n).collect();
            order.shuffle(&mut rng::keyed_rng(spec.seed, epoch));
            if !losses.is_empty() {
                epoch_losses.push(pairwise_sum(&losses) / losses.len() as f64);
                losses.clear();
            }
        }
        let rows = &order[pos * spec.batch_size..((pos + 1) * spec.batch_size).min(n)];
        let current = ckpt.with_params(params.clone(), TrainMeta::default())?;
        let per_sample: Vec<(f64, Vec<Tensor>)> = rows
            .par_iter()
            .enumerate()
            .map(|(slot, &row)| {
                let mut x = data.image(row)?;
                if let Some(aug) = &spec.augmentation {
                    let key = batch * spec.batch_size as u64 + slot as u64;
                    x = aug.apply(&x, &mut rng::keyed_rng(rng::derive_seed(spec.seed, 1), key));
                }
                sample_gradient(&current, &x, data.label(row))
            })
            .collect::<Result<_>>()?;
        let batch_len = per_sample.len() as f64;
        let batch_losses: Vec<f64> = per_sample.iter().map(|(l, _)| *l).collect();
        losses.push(pairwise_sum(&batch_losses) / batch_len);
        let step = spec.learning_rate / batch_len;
        for (k, p) in params.iter_mut().enumerate() {
            let grads: Vec<Tensor> = per_sample.iter().map(|(_, g)| g[k].clone()).collect();
            let g = pairwise_sum_tensors(&grads)?;
            *p = p.zip_with(&g, |w, gw| w - step * gw)?;
            if !p.is_finite() {
                return Err(Error::NonFiniteGradient { sample: batch as usize });
            }
        }
    }
    if !losses.is_empty() {
        epoch_losses.push(pairwise_sum(&losses) / losses.len() as f64);
    }

    let mut meta = ckpt.train_meta.clone();
    meta.batches += total_batches;
    meta.epochs += total_batches as f64 / batches_per_epoch as f64;
    meta.loss_history.extend(epoch_losses);
    let mut trained = ckpt.with_params(params, meta)?;
    trained.train_meta.train_accuracy = Some(evaluate(&trained, data)?);
    trained.train_meta.test_accuracy = None;
    Ok(trained)
}

fn sample_gradient(ckpt: &Checkpoint, x: &Tensor, label: usize) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let input = tape.constant(x.clone());
    let rec = ckpt.record(&mut tape, input, true)?;
    let loss = tape.softmax_cross_entropy(rec.logits, label)?;
    let value = tape.value(loss).data()[0];
    let mut grads = tape.backward(loss)?;
    let g = rec
        .params
        .iter()
        .map(|v| grads.remove(v).expect("parameters are marked leaves"))
        .collect();
    Ok((value, g))
}

/// Fraction of images whose arg-max prediction equals the label.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits: Vec<bool> = (0..data.len())
        .into_par_iter()
        .map(|i| Ok(ckpt.logits(&data.image(i)?)?.argmax() == data.label(i)))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth;
    use crate::model::{init_model, ModelConfig};

    fn tiny() -> (Checkpoint, Dataset) {
        let data = synth::generate("t", 20, 3).unwrap();
        let ckpt = init_model(ModelConfig::reference([1, 28, 28], 10, 4)).unwrap();
        (ckpt, data)
    }

    fn spec(lr: f64, aug: Option<AugmentSpec>) -> TrainSpec {
        TrainSpec {
            learning_rate: lr,
            batch_size: 4,
            duration: TrainDuration::Batches(3),
            augmentation: aug,
            seed: 9,
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (ckpt, data) = tiny();
        let out = train(&ckpt, &data, &spec(0.0, None)).unwrap();
        assert_eq!(out.params(), ckpt.params());
    }

    #[test]
    fn identity_augmentation_matches_plain_run() {
        let (ckpt, data) = tiny();
        let plain = train(&ckpt, &data, &spec(0.05, None)).unwrap();
        let aug = AugmentSpec {
            gaussian_sigma_range: [0.0, 0.0],
            luminance_range: [1.0, 1.0],
        };
        let augmented = train(&ckpt, &data, &spec(0.05, Some(aug))).unwrap();
        assert_eq!(plain.params(), augmented.params());
    }

    #[test]
    fn training_is_deterministic() {
        let (ckpt, data) = tiny();
        let a = train(&ckpt, &data, &spec(0.05, None)).unwrap();
        let b = train(&ckpt, &data, &spec(0.05, None)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), ckpt.params());
    }

    #[test]
    fn rejects_bad_specs() {
        let (ckpt, data) = tiny();
        let mut s = spec(0.1, None);
        s.batch_size = 0;
        assert!(train(&ckpt, &data, &s).is_err());
        let s = spec(
            0.1,
            Some(AugmentSpec {
                gaussian_sigma_range: [0.3, 0.1],
                luminance_range: [1.0, 1.0],
            }),
        );
        assert!(train(&ckpt, &data, &s).is_err());
    }
}
