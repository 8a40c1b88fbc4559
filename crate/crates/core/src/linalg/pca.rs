use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as the columns of the second matrix.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Shape(format!("eigen of non-square {}x{}", n, a.cols())));
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m.get(p, q).powi(2))
            .sum::<f64>()
            .sqrt();
        if off < JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, dst, v.get(k, src));
        }
    }
    Ok((values, vectors))
}

/// Two-component PCA projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca2d {
    /// m×2 projected coordinates.
    pub points: Matrix,
    /// 2×n principal axes (rows are unit vectors).
    pub components: Matrix,
    pub variance_explained: [f64; 2],
}

/// Projects the rows of `x` onto the top two covariance eigenvectors.
///
/// Each component is oriented so its largest-magnitude loading is positive.
/// When there are more features than samples the decomposition runs on the
/// m×m Gram matrix of the centered data, which has the same non-zero spectrum.
pub fn pca_2d(x: &Matrix) -> Result<Pca2d> {
    let (m, n) = x.shape();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 samples, got {m}"
        )));
    }
    let means = x.col_means();
    let mut centered = x.clone();
    for r in 0..m {
        for (v, mu) in centered.row_mut(r).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    let denom = (m - 1) as f64;

    let (values, axes): (Vec<f64>, Vec<Vec<f64>>) = if n <= m {
        let cov = centered.t_matmul(&centered)?.scale(1.0 / denom);
        let (vals, vecs) = symmetric_eigen(&cov)?;
        let axes = (0..2.min(n)).map(|j| vecs.column(j)).collect();
        (vals, axes)
    } else {
        let gram = centered.matmul_t(&centered)?.scale(1.0 / denom);
        let (vals, vecs) = symmetric_eigen(&gram)?;
        let mut axes = Vec::new();
        for j in 0..2 {
            let u = vecs.column(j);
            // axis = Xcᵀ u, normalised
            let mut a = vec![0.0; n];
            for (r, &ur) in u.iter().enumerate() {
                for (ai, xi) in a.iter_mut().zip(centered.row(r)) {
                    *ai += ur * xi;
                }
            }
            let norm = dot(&a, &a).sqrt();
            if norm > 0.0 {
                a.iter_mut().for_each(|v| *v /= norm);
            }
            axes.push(a);
        }
        (vals, axes)
    };

    let mut components = Matrix::zeros(2, n);
    for (j, axis) in axes.iter().enumerate() {
        let lead = axis
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for (k, &a) in axis.iter().enumerate() {
            components.set(j, k, sign * a);
        }
    }

    let points = centered.matmul_t(&components)?;
    let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let frac = |i: usize| {
        if total > 0.0 {
            clamped.get(i).copied().unwrap_or(0.0) / total
        } else {
            0.0
        }
    };
    Ok(Pca2d {
        points,
        components,
        variance_explained: [frac(0), frac(1)],
    })
}
