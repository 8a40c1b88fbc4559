//! Neural-matter state reports: a layer's neurons projected to the plane,
//! their density, the pairwise yat similarity matrix and collapsed pairs.

mod export;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, pca_2d, Matrix};
use crate::yat::pairwise_yat_matrix;

pub use export::{export_nms, render_svg, ExportFormat};

pub const DEFAULT_KAPPA: f64 = 10.0;
pub const DEFAULT_GRID: usize = 64;
/// Pairs whose cosine is at most this are treated as orthogonal and never flagged.
pub const ORTHOGONAL_COSINE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapsePair {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmsReport {
    pub layer_name: String,
    pub epsilon: f64,
    /// m×2 projected neuron coordinates.
    pub points: Matrix,
    pub variance_explained: [f64; 2],
    /// `[x_min, x_max, y_min, y_max]` of the density grid.
    pub bounds: [f64; 4],
    /// g×g kernel density estimate; row index is y, column index is x.
    pub density_grid: Matrix,
    pub similarity: Matrix,
    pub median_similarity: f64,
    pub kappa: f64,
    pub collapse_pairs: Vec<CollapsePair>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flags pairs with similarity above `kappa` times the median off-diagonal
/// similarity. Returns the median and the flagged pairs.
pub fn collapse_pairs(kernel: &Matrix, similarity: &Matrix, kappa: f64) -> (f64, Vec<CollapsePair>) {
    let m = similarity.rows();
    let mut off = Vec::with_capacity(m * (m.saturating_sub(1)) / 2);
    for i in 0..m {
        for j in i + 1..m {
            off.push(similarity.get(i, j));
        }
    }
    let med = median(off);
    let norms: Vec<f64> = kernel.row_sq_norms().into_iter().map(f64::sqrt).collect();
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let s = similarity.get(i, j);
            let denom = norms[i] * norms[j];
            let cos = if denom > 0.0 {
                dot(kernel.row(i), kernel.row(j)) / denom
            } else {
                0.0
            };
            if s > kappa * med && cos.abs() > ORTHOGONAL_COSINE {
                pairs.push(CollapsePair { i, j, similarity: s });
            }
        }
    }
    (med, pairs)
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.1 * span, hi + 0.1 * span)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Gaussian KDE with Scott's per-axis bandwidth `σ·m^(−1/6)` on a
/// `grid×grid` lattice spanning the points' bounding box padded by 10%.
pub fn density(points: &Matrix, grid: usize) -> ([f64; 4], Matrix) {
    let xs = points.column(0);
    let ys = points.column(1);
    let (x0, x1) = padded_range(&xs);
    let (y0, y1) = padded_range(&ys);
    let m = points.rows() as f64;
    let scott = m.powf(-1.0 / 6.0);
    // a degenerate axis falls back to a bandwidth of 5% of the padded box
    let hx = match std_dev(&xs) * scott {
        h if h > 0.0 => h,
        _ => 0.05 * (x1 - x0),
    };
    let hy = match std_dev(&ys) * scott {
        h if h > 0.0 => h,
        _ => 0.05 * (y1 - y0),
    };
    let norm = 1.0 / (m * 2.0 * std::f64::consts::PI * hx * hy);
    let at = |lo: f64, hi: f64, i: usize| {
        if grid > 1 {
            lo + (hi - lo) * i as f64 / (grid - 1) as f64
        } else {
            0.5 * (lo + hi)
        }
    };
    let mut out = Matrix::zeros(grid, grid);
    for gy in 0..grid {
        let y = at(y0, y1, gy);
        for gx in 0..grid {
            let x = at(x0, x1, gx);
            let s: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(px, py)| {
                    let u = (x - px) / hx;
                    let v = (y - py) / hy;
                    (-0.5 * (u * u + v * v)).exp()
                })
                .sum();
            out.set(gy, gx, s * norm);
        }
    }
    ([x0, x1, y0, y1], out)
}

/// Builds a report with PCA coordinates.
pub fn build_nms(kernel: &Matrix, epsilon: f64, kappa: f64, grid: usize) -> Result<NmsReport> {
    if kernel.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "NMS needs at least 2 neurons, got {}",
            kernel.rows()
        )));
    }
    let pca = pca_2d(kernel)?;
    build_nms_from_points(kernel, pca.points, pca.variance_explained, epsilon, kappa, grid)
}

/// Builds a report from externally supplied 2-D coordinates.
pub fn build_nms_from_points(
    kernel: &Matrix,
    points: Matrix,
    variance_explained: [f64; 2],
    epsilon: f64,
    kappa: f64,
    grid: usize,
) -> Result<NmsReport> {
    if kernel.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "NMS needs at least 2 neurons, got {}",
            kernel.rows()
        )));
    }
    if points.shape() != (kernel.rows(), 2) {
        return Err(shape_err!("points {:?} for {} neurons", points.shape(), kernel.rows()));
    }
    if grid == 0 {
        return Err(shape_err!("density grid must have at least one cell"));
    }
    let similarity = pairwise_yat_matrix(kernel, epsilon)?;
    let (median_similarity, collapse_pairs) = collapse_pairs(kernel, &similarity, kappa);
    let (bounds, density_grid) = density(&points, grid);
    Ok(NmsReport {
        layer_name: String::new(),
        epsilon,
        points,
        variance_explained,
        bounds,
        density_grid,
        similarity,
        median_similarity,
        kappa,
        collapse_pairs,
    })
}

impl NmsReport {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.layer_name = name.into();
        self
    }

    /// Largest off-diagonal similarity.
    pub fn max_off_diagonal(&self) -> f64 {
        let m = self.similarity.rows();
        let mut best: f64 = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                best = best.max(self.similarity.get(i, j));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthogonal_init, DrawKind, RngState};

    fn random(m: usize, n: usize, seed: u64) -> Matrix {
        let (v, _) = RngState::new(seed).draw(DrawKind::StandardNormal, m * n).unwrap();
        Matrix::from_vec(m, n, v).unwrap()
    }

    #[test]
    fn duplicate_row_flagged() {
        let mut k = random(16, 8, 1);
        let dup = k.row(3).to_vec();
        k.row_mut(11).copy_from_slice(&dup);
        let r = build_nms(&k, 1e-6, DEFAULT_KAPPA, 16).unwrap();
        assert!(r.collapse_pairs.iter().any(|p| (p.i, p.j) == (3, 11)));
        for p in &r.collapse_pairs {
            assert!(p.similarity > r.kappa * r.median_similarity);
        }
    }

    #[test]
    fn orthogonal_rows_not_flagged() {
        let (k, _) = orthogonal_init(6, 10, RngState::new(2));
        let r = build_nms(&k, 1e-6, DEFAULT_KAPPA, 8).unwrap();
        assert!(r.collapse_pairs.is_empty());
        assert!(build_nms(&Matrix::identity(4), 1e-6, DEFAULT_KAPPA, 8).unwrap().collapse_pairs.is_empty());
    }

    #[test]
    fn delegates_similarity() {
        let k = random(5, 3, 3);
        let r = build_nms(&k, 1e-6, DEFAULT_KAPPA, 4).unwrap();
        assert_eq!(r.similarity, pairwise_yat_matrix(&k, 1e-6).unwrap());
        assert!(build_nms(&random(1, 3, 0), 1e-6, 10.0, 4).is_err());
    }

    #[test]
    fn density_integrates_to_about_one() {
        let k = random(40, 6, 4);
        let r = build_nms(&k, 1e-6, DEFAULT_KAPPA, 64).unwrap();
        let [x0, x1, y0, y1] = r.bounds;
        let cell = (x1 - x0) / 63.0 * (y1 - y0) / 63.0;
        let mass = r.density_grid.sum() * cell;
        assert!(mass > 0.5 && mass < 1.05, "{mass}");
        let xs = r.points.column(0);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((x0 - (lo - 0.1 * (hi - lo))).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let k = random(7, 5, 5);
        assert_eq!(build_nms(&k, 1e-6, 10.0, 8).unwrap(), build_nms(&k, 1e-6, 10.0, 8).unwrap());
    }
}
