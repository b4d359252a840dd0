//! Datasets: IDX and raw-RGB loaders, seeded subsampling, and a procedural
//! digit corpus used as the reference data set.

mod idx;
mod rgb;
pub mod synth;

use rand::seq::index;

pub use idx::{load_idx, write_idx};
pub use rgb::load_rgb_dir;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Images `(n, channels, height, width)` in `[0, 1]` with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    class_count: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, images: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::InvalidTensor(format!(
                "dataset images must be (n, c, h, w), got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::IdxCountMismatch {
                images: images.shape()[0],
                labels: labels.len(),
            });
        }
        if let Some(&v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange { value: v });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::ClassOutOfRange {
                index: l,
                classes: class_count,
            });
        }
        Ok(Self {
            images,
            labels,
            class_count,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `(channels, height, width)` of one image.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn image(&self, i: usize) -> Result<Tensor> {
        self.images.index_outer(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// New dataset made of the listed rows, in list order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let per: usize = self.image_shape().iter().product();
        let mut data = Vec::with_capacity(per * indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidParameter(format!("row {i} out of range for {}", self.len())));
            }
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.image_shape());
        Ok(Dataset {
            images: Tensor::from_parts(shape, data),
            labels,
            class_count: self.class_count,
            name: self.name.clone(),
        })
    }
}

/// Indices of a seeded uniform sample without replacement.
pub fn subsample_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > len {
        return Err(Error::InvalidParameter(format!("cannot draw {n} items from {len}")));
    }
    let mut rng = rng::keyed_rng(seed, 0);
    Ok(index::sample(&mut rng, len, n).into_vec())
}

/// Seeded uniform sample of `n` rows without replacement.
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    data.select(&subsample_indices(data.len(), n, seed)?)
}
