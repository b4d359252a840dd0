//! Pixel attribution by gradient integration, scored by explanation certainty.
//!
//! An attribution map for class `y` of input `x` is the expected absolute
//! input gradient of the class score over samples drawn from a sampling
//! distribution around `x`. The crate provides the distributions (feature
//! suppression by Bernoulli pixel dropping, additive Gaussian noise, global
//! linear scaling, identity), a small reverse-mode autodiff engine and CNN to
//! differentiate, and a histogram mutual-information estimator that scores
//! each map by the lower bound `exp(I(x; z) - H(x))` on `Pr(x | z)`.
//!
//! Runnable walkthroughs live in `examples/`; the `attrlab` binary drives
//! whole experiments from a config file.

pub mod attribution;
pub mod certainty;
pub mod data;
pub mod diagnostics;
pub mod diff;
pub mod error;
pub mod experiment;
pub mod model;
pub mod render;
pub mod rng;
pub mod samplers;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
