//! A small convolutional classifier: configuration, parameters, inference,
//! penultimate-layer embeddings and training.

mod io;
mod train;

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use io::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{evaluate, train, AugmentSpec, TrainDuration, TrainSpec};

use crate::diff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize },
    Relu,
    MaxPool2,
    Dense { inputs: usize, units: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `(channels, height, width)`.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// conv3x3x8, relu, pool, conv3x3x16, relu, pool, dense 64, relu, dense to classes.
    pub fn reference(input_shape: [usize; 3], class_count: usize, seed: u64) -> Self {
        let flat = 16 * (input_shape[1] / 4) * (input_shape[2] / 4);
        Self {
            input_shape,
            layers: vec![
                LayerSpec::Conv { out_channels: 8, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Conv { out_channels: 16, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Dense { inputs: flat, units: 64 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 64, units: class_count },
            ],
            class_count,
            seed,
        }
    }

    /// Walks the shape chain and returns the parameter manifest in layer order.
    pub fn parameter_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.input_shape.contains(&0) {
            return bad(format!("input shape {:?} has a zero dimension", self.input_shape));
        }
        if self.class_count == 0 {
            return bad("class count must be positive".into());
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) if *units == self.class_count => {}
            _ => return bad(format!("last layer must be dense with {} units", self.class_count)),
        }
        let mut shape = self.input_shape.to_vec();
        let mut params = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv { out_channels, kernel } => {
                    if shape.len() != 3 {
                        return bad(format!("layer {i}: conv after flattening"));
                    }
                    if kernel % 2 == 0 || out_channels == 0 {
                        return bad(format!("layer {i}: conv needs odd kernel and positive channels"));
                    }
                    params.push((format!("layer{i}.weight"), vec![out_channels, shape[0], kernel, kernel]));
                    params.push((format!("layer{i}.bias"), vec![out_channels]));
                    shape[0] = out_channels;
                }
                LayerSpec::Relu => {}
                LayerSpec::MaxPool2 => {
                    if shape.len() != 3 || shape[1] < 2 || shape[2] < 2 {
                        return bad(format!("layer {i}: maxpool on shape {shape:?}"));
                    }
                    shape[1] /= 2;
                    shape[2] /= 2;
                }
                LayerSpec::Dense { inputs, units } => {
                    let flat: usize = shape.iter().product();
                    if inputs != flat {
                        return bad(format!("layer {i}: dense expects {inputs} inputs, chain provides {flat}"));
                    }
                    if units == 0 {
                        return bad(format!("layer {i}: dense needs positive units"));
                    }
                    params.push((format!("layer{i}.weight"), vec![units, inputs]));
                    params.push((format!("layer{i}.bias"), vec![units]));
                    shape = vec![units];
                }
            }
        }
        Ok(params)
    }

    /// Width of the activation feeding the final dense layer (the flattened
    /// input for a single-layer model).
    pub fn embedding_dim(&self) -> Result<usize> {
        self.parameter_shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Dense { inputs, .. }) => Ok(*inputs),
            _ => unreachable!("validated above"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMeta {
    pub epochs: f64,
    pub batches: u64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Mean training loss per epoch (or per run for batch-budgeted training).
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedParam {
    pub name: String,
    pub value: Tensor,
}

/// Model parameters plus the configuration that shaped them.
/// Immutable once built; training returns a new checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    config: ModelConfig,
    params: Vec<NamedParam>,
    pub train_meta: TrainMeta,
    id: OnceLock<String>,
}

impl PartialEq for Checkpoint {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.train_meta == other.train_meta
    }
}

impl Checkpoint {
    /// Assembles a checkpoint, checking every parameter against the config.
    pub fn from_parts(config: ModelConfig, params: Vec<NamedParam>, train_meta: TrainMeta) -> Result<Self> {
        let expected = config.parameter_shapes()?;
        if expected.len() != params.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameters, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::InvalidConfig(format!(
                    "parameter {} {:?} does not match {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Self {
            config,
            params,
            train_meta,
            id: OnceLock::new(),
        })
    }

    /// All-zero parameters: every input maps to equal logits.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        let params = config
            .parameter_shapes()?
            .into_iter()
            .map(|(name, shape)| NamedParam {
                name,
                value: Tensor::zeros(&shape),
            })
            .collect();
        Self::from_parts(config, params, TrainMeta::default())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[NamedParam] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    /// Short content hash of the configuration and parameters.
    pub fn id(&self) -> &str {
        self.id.get_or_init(|| {
            let mut h = Sha256::new();
            h.update(serde_json::to_vec(&self.config).expect("config serializes"));
            for p in &self.params {
                h.update(p.name.as_bytes());
                for v in p.value.data() {
                    h.update(v.to_le_bytes());
                }
            }
            h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
        })
    }

    pub fn class_count(&self) -> usize {
        self.config.class_count
    }

    pub(crate) fn check_class(&self, y: usize) -> Result<()> {
        if y >= self.config.class_count {
            return Err(Error::ClassOutOfRange {
                index: y,
                classes: self.config.class_count,
            });
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.config.input_shape {
            return Err(Error::ShapeMismatch {
                primitive: "model input",
                left: x.shape().to_vec(),
                right: self.config.input_shape.to_vec(),
            });
        }
        Ok(())
    }

    pub(crate) fn with_params(&self, values: Vec<Tensor>, train_meta: TrainMeta) -> Result<Self> {
        let params = self
            .params
            .iter()
            .zip(values)
            .map(|(p, value)| NamedParam {
                name: p.name.clone(),
                value,
            })
            .collect();
        Self::from_parts(self.config.clone(), params, train_meta)
    }

    /// Records the full network on `tape`. Parameters become marked leaves
    /// when `trainable`, constants otherwise.
    pub(crate) fn record(&self, tape: &mut Tape, input: Var, trainable: bool) -> Result<Recorded> {
        self.check_input(tape.value(input))?;
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        let mut h = input;
        let mut next_param = 0;
        let last = self.config.layers.len() - 1;
        let mut embedding = None;
        for (i, layer) in self.config.layers.iter().enumerate() {
            if i == last {
                embedding = Some(h);
            }
            h = match layer {
                LayerSpec::Conv { .. } => {
                    next_param += 2;
                    tape.conv2d(h, params[next_param - 2], params[next_param - 1])?
                }
                LayerSpec::Dense { .. } => {
                    next_param += 2;
                    tape.dense(h, params[next_param - 2], params[next_param - 1])?
                }
                LayerSpec::Relu => tape.relu(h)?,
                LayerSpec::MaxPool2 => tape.max_pool2(h)?,
            };
        }
        Ok(Recorded {
            params,
            embedding: embedding.expect("config has an output layer"),
            logits: h,
        })
    }

    pub(crate) fn record_logits(&self, tape: &mut Tape, input: Var, trainable: bool) -> Result<Var> {
        Ok(self.record(tape, input, trainable)?.logits)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let logits = self.record_logits(&mut tape, input, false)?;
        Ok(tape.value(logits).clone())
    }

    /// Class probabilities (softmax of the logits).
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let logits = self.logits(x)?;
        Ok(Tensor::from_parts(
            vec![logits.numel()],
            crate::diff::softmax_probs(logits.data()),
        ))
    }

    /// Activation of the layer feeding the final dense layer, flattened.
    pub fn embedding(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let rec = self.record(&mut tape, input, false)?;
        let e = tape.value(rec.embedding);
        e.reshape(vec![e.numel()])
    }
}

pub(crate) struct Recorded {
    pub params: Vec<Var>,
    pub embedding: Var,
    pub logits: Var,
}

/// Fan-in scaled normal initialization, deterministic in `config.seed`.
pub fn init_model(config: ModelConfig) -> Result<Checkpoint> {
    let shapes = config.parameter_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Vec::with_capacity(shapes.len());
    for (name, shape) in shapes {
        let n: usize = shape.iter().product();
        let value = if name.ends_with(".bias") {
            Tensor::zeros(&shape)
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            Tensor::from_parts(shape, (0..n).map(|_| normal.sample(&mut rng)).collect())
        };
        params.push(NamedParam { name, value });
    }
    Checkpoint::from_parts(config, params, TrainMeta::default())
}
