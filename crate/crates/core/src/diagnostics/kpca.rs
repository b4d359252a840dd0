use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub const EIGEN_TOLERANCE: f64 = 1e-10;
pub const EIGEN_MAX_ITERATIONS: usize = 10_000;

/// Output of [`cosine_kernel_pca`].
#[derive(Clone, Debug, PartialEq)]
pub struct KernelPca {
    /// `n` rows of `out_dim` coordinates.
    pub points: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// Rows scaled to unit length, then centered column-wise.
///
/// With `C` this matrix, `C C^T` is the double-centered cosine kernel, so
/// products with the kernel never need the `n x n` matrix itself.
fn centered_unit_rows(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = vectors.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != d {
            return Err(Error::ShapeMismatch {
                primitive: "cosine_kernel_pca",
                left: vec![d],
                right: vec![v.len()],
            });
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "row {i} has zero or non-finite norm; cosine similarity is undefined"
            )));
        }
        rows.push(v.iter().map(|a| a / norm).collect::<Vec<f64>>());
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    for r in &mut rows {
        for (a, m) in r.iter_mut().zip(&mean) {
            *a -= m;
        }
    }
    Ok(rows)
}

/// Explicit double-centered cosine kernel `H K H`, row-major `n x n`.
pub fn centered_cosine_kernel(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let c = centered_unit_rows(vectors)?;
    let n = c.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = dot(&c[i], &c[j]);
        }
    }
    Ok(k)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(a, bb)| *a -= c * bb);
    }
}

/// Largest-magnitude coordinate (first on ties) made positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, a) in v.iter().enumerate() {
        if a.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|a| *a = -*a);
    }
}

/// Projects rows onto the top `out_dim` components of the double-centered
/// cosine kernel, scaled by the square root of each eigenvalue.
///
/// Eigenpairs come from power iteration with Gram-Schmidt deflation.
pub fn cosine_kernel_pca(vectors: &[Vec<f64>], out_dim: usize) -> Result<KernelPca> {
    let n = vectors.len();
    if out_dim == 0 || n < out_dim + 1 {
        return Err(Error::InvalidParameter(format!(
            "kernel PCA to {out_dim} dimensions needs at least {} rows, got {n}",
            out_dim + 1
        )));
    }
    let c = centered_unit_rows(vectors)?;
    let d = c[0].len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut t = vec![0.0; d];
        for (row, &a) in c.iter().zip(v) {
            t.iter_mut().zip(row).for_each(|(s, r)| *s += a * r);
        }
        c.iter().map(|row| dot(row, &t)).collect()
    };

    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(out_dim);
    let mut vals = Vec::with_capacity(out_dim);
    for k in 0..out_dim {
        let mut start = rng::keyed_rng(0x6b70_6361, k as u64);
        let mut v: Vec<f64> = (0..n).map(|_| start.random::<f64>() - 0.5).collect();
        orthogonalize(&mut v, &vecs);
        normalize(&mut v);
        let mut converged = false;
        let mut lambda = 0.0;
        for _ in 0..EIGEN_MAX_ITERATIONS {
            let mut w = apply(&v);
            orthogonalize(&mut w, &vecs);
            lambda = normalize(&mut w);
            if lambda == 0.0 {
                // remaining spectrum is null; any orthonormal direction will do
                converged = true;
                break;
            }
            let delta = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            v = w;
            if delta < EIGEN_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::EigenSolve(format!(
                "component {k} did not converge in {EIGEN_MAX_ITERATIONS} iterations"
            )));
        }
        // Rayleigh quotient is more accurate than the last norm ratio
        if lambda != 0.0 {
            lambda = dot(&v, &apply(&v));
        }
        fix_sign(&mut v);
        vecs.push(v);
        vals.push(lambda);
    }
    let points = (0..n)
        .map(|i| (0..out_dim).map(|k| vecs[k][i] * vals[k].max(0.0).sqrt()).collect())
        .collect();
    Ok(KernelPca {
        points,
        eigenvalues: vals,
    })
}
