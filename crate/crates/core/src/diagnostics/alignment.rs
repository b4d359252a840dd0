use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kpca::cosine_kernel_pca;
use crate::data::{subsample_indices, Dataset};
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::rng;
use crate::samplers::{SampleStream, SamplerSpec};

pub const NATURAL_GROUP: &str = "natural";

/// Joint 2-d projection of natural images and sampler outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub points: Vec<[f64; 2]>,
    /// Group name of each point.
    pub group_labels: Vec<String>,
    /// Group names in order; the natural group comes first.
    pub groups: Vec<String>,
    pub centroids: Vec<[f64; 2]>,
    pub centroid_distance_to_natural: Vec<f64>,
}

impl ProjectionResult {
    /// Assembles a result from projected points, computing group centroids.
    pub fn from_points(points: Vec<[f64; 2]>, group_labels: Vec<String>) -> Result<Self> {
        if points.len() != group_labels.len() {
            return Err(Error::ShapeMismatch {
                primitive: "projection",
                left: vec![points.len()],
                right: vec![group_labels.len()],
            });
        }
        let mut groups: Vec<String> = Vec::new();
        for g in &group_labels {
            if !groups.contains(g) {
                groups.push(g.clone());
            }
        }
        let centroids: Vec<[f64; 2]> = groups
            .iter()
            .map(|g| {
                let mut sum = [0.0; 2];
                let mut count = 0usize;
                for (p, l) in points.iter().zip(&group_labels) {
                    if l == g {
                        sum[0] += p[0];
                        sum[1] += p[1];
                        count += 1;
                    }
                }
                [sum[0] / count as f64, sum[1] / count as f64]
            })
            .collect();
        let natural = groups
            .iter()
            .position(|g| g == NATURAL_GROUP)
            .map_or(centroids[0], |i| centroids[i]);
        let centroid_distance_to_natural = centroids
            .iter()
            .map(|c| ((c[0] - natural[0]).powi(2) + (c[1] - natural[1]).powi(2)).sqrt())
            .collect();
        Ok(Self {
            points,
            group_labels,
            groups,
            centroids,
            centroid_distance_to_natural,
        })
    }

    pub fn distance_of(&self, group: &str) -> Option<f64> {
        let i = self.groups.iter().position(|g| g == group)?;
        Some(self.centroid_distance_to_natural[i])
    }

    pub fn group_index(&self, point: usize) -> usize {
        let label = &self.group_labels[point];
        self.groups.iter().position(|g| g == label).unwrap_or(0)
    }

    /// `x,y,group` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,group\n");
        for (p, g) in self.points.iter().zip(&self.group_labels) {
            let _ = writeln!(out, "{:.16e},{:.16e},{}", p[0], p[1], crate::certainty::csv_field(g));
        }
        out
    }

    /// `group,cx,cy,distanceToNatural` rows.
    pub fn centroids_csv(&self) -> String {
        let mut out = String::from("group,cx,cy,distanceToNatural\n");
        for ((g, c), d) in self.groups.iter().zip(&self.centroids).zip(&self.centroid_distance_to_natural) {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{:.16e}", crate::certainty::csv_field(g), c[0], c[1], d);
        }
        out
    }
}

/// Embeds `per_group` natural images plus `per_group` samples of every
/// sampler, projects all of them jointly with cosine-kernel PCA and reports
/// each group's centroid distance to the natural centroid.
///
/// Sample `i` of every sampler is derived from natural image `i mod count`.
pub fn alignment_study(
    ckpt: &Checkpoint,
    data: &Dataset,
    samplers: &[SamplerSpec],
    per_group: usize,
    seed: u64,
) -> Result<ProjectionResult> {
    if per_group == 0 {
        return Err(Error::InvalidParameter("per-group count must be at least 1".into()));
    }
    for s in samplers {
        s.validate()?;
    }
    let rows = subsample_indices(data.len(), per_group.min(data.len()), seed)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut jobs: Vec<(usize, usize)> = (0..per_group).map(|i| (0, i)).collect();
    for g in 0..samplers.len() {
        jobs.extend((0..per_group).map(|i| (g + 1, i)));
    }
    let embeddings: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(g, i)| {
            let x = data.image(rows[i % rows.len()])?;
            let input = if g == 0 {
                x
            } else {
                let stream = SampleStream::new(
                    samplers[g - 1].clone(),
                    x,
                    rng::derive_seed(seed, g as u64),
                    per_group,
                )?;
                stream.draw(i)?
            };
            Ok(ckpt.embedding(&input)?.to_vec())
        })
        .collect::<Result<_>>()?;

    let projection = cosine_kernel_pca(&embeddings, 2)?;
    let points = projection.points.iter().map(|p| [p[0], p[1]]).collect();
    let labels = jobs
        .iter()
        .map(|&(g, _)| if g == 0 { NATURAL_GROUP.to_string() } else { samplers[g - 1].label() })
        .collect();
    ProjectionResult::from_points(points, labels)
}
