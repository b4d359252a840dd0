//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records a fixed set of primitives (convolution, dense map,
//! rectifier, max-pooling, addition, scaling, cross-entropy and logit
//! selection) and replays them backwards to produce gradients for the
//! leaves marked as differentiation targets.

mod kernels;
mod tape;

use serde::{Deserialize, Serialize};

pub use tape::{Gradients, Primitive, Tape, Var};

use crate::error::Result;
use crate::model::Checkpoint;
use crate::tensor::Tensor;

/// Which scalar of the classifier is differentiated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Pre-softmax logit of the class.
    #[default]
    Logit,
    /// Log of the softmax probability of the class.
    LogProbability,
}

/// `d f(x, y) / d x` for the model's score of class `y`.
pub fn input_gradient(model: &Checkpoint, x: &Tensor, y: usize, mode: ScoreMode) -> Result<Tensor> {
    model.check_class(y)?;
    let mut tape = Tape::new();
    let input = tape.leaf(x.clone());
    let logits = model.record_logits(&mut tape, input, false)?;
    let score = match mode {
        ScoreMode::Logit => tape.select_logit(logits, y)?,
        ScoreMode::LogProbability => {
            let nll = tape.softmax_cross_entropy(logits, y)?;
            tape.scale(nll, -1.0)?
        }
    };
    let mut grads = tape.backward(score)?;
    Ok(grads.remove(&input).expect("input is a marked leaf"))
}

/// Numerically stable softmax.
pub fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    kernels::softmax(logits)
}
