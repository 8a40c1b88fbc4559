use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{domain_err, Result};
use crate::linalg::{DrawKind, Matrix, RngState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobOptions {
    /// Distance of each centre from the origin.
    pub separation: f64,
    /// When set, class 1 is centred at class 0's centre plus this offset
    /// along the second axis.
    pub near_duplicate: Option<f64>,
}

impl Default for BlobOptions {
    fn default() -> Self {
        BlobOptions {
            separation: 1.0,
            near_duplicate: None,
        }
    }
}

/// Centre of class `c`: `±separation · e_{c mod dim}`, the sign flipping each
/// time the axes wrap around so centres stay distinct.
fn centre(c: usize, dim: usize, separation: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let sign = if (c / dim) % 2 == 0 { 1.0 } else { -1.0 };
    let lap = 1.0 + (c / (2 * dim)) as f64;
    v[c % dim] = sign * separation * lap;
    v
}

pub fn synthetic_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    state: RngState,
) -> Result<(Dataset, RngState)> {
    synthetic_blobs_with(classes, per_class, dim, spread, BlobOptions::default(), state)
}

/// Isotropic Gaussian clusters, samples grouped by class.
pub fn synthetic_blobs_with(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    options: BlobOptions,
    state: RngState,
) -> Result<(Dataset, RngState)> {
    if classes < 2 {
        return Err(domain_err!("need at least two classes, got {classes}"));
    }
    if dim == 0 || (options.near_duplicate.is_some() && dim < 2) {
        return Err(domain_err!("blob dimension {dim} too small"));
    }
    let mut centres: Vec<Vec<f64>> = (0..classes).map(|c| centre(c, dim, options.separation)).collect();
    if let Some(offset) = options.near_duplicate {
        let mut twin = centres[0].clone();
        twin[1] += offset;
        centres[1] = twin;
    }
    let n = classes * per_class;
    let (noise, state) = state.draw(DrawKind::StandardNormal, n * dim)?;
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for k in 0..per_class {
            let r = c * per_class + k;
            let z = &noise[r * dim..(r + 1) * dim];
            for ((f, m), e) in features.row_mut(r).iter_mut().zip(&centres[c]).zip(z) {
                *f = m + spread * e;
            }
            labels.push(c);
        }
    }
    Ok((Dataset::new(features, labels, classes)?, state))
}
