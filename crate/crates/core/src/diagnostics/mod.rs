//! Analysis experiments: sample-alignment projection, the dropping
//! probability sweep and augmentation fragility.

mod alignment;
mod fragility;
mod kpca;
mod sweep;

pub use alignment::{alignment_study, ProjectionResult, NATURAL_GROUP};
pub use fragility::{augmentation_fragility, FragilityReport, MethodChange};
pub use kpca::{centered_cosine_kernel, cosine_kernel_pca, KernelPca, EIGEN_MAX_ITERATIONS, EIGEN_TOLERANCE};
pub use sweep::{argmax, p_sweep, unimodality_violations, unit_grid, SweepResult, SweepSpec};
