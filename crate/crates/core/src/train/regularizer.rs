use crate::linalg::{dot, sq_dist, Matrix};

/// Mean yat similarity over unordered pairs of kernel rows. Zero for fewer
/// than two rows.
pub fn e_regularizer_penalty(kernel: &Matrix, epsilon: f64) -> f64 {
    let m = kernel.rows();
    if m < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let d = dot(kernel.row(i), kernel.row(j));
            total += d * d / (epsilon + sq_dist(kernel.row(i), kernel.row(j)));
        }
    }
    total / (m * (m - 1) / 2) as f64
}

/// Gradient of [`e_regularizer_penalty`] with respect to the kernel.
pub fn e_regularizer_grad(kernel: &Matrix, epsilon: f64) -> Matrix {
    let (m, n) = kernel.shape();
    let mut g = Matrix::zeros(m, n);
    if m < 2 {
        return g;
    }
    let pairs = (m * (m - 1) / 2) as f64;
    for i in 0..m {
        for j in i + 1..m {
            let (wi, wj) = (kernel.row(i), kernel.row(j));
            let d = dot(wi, wj);
            let den = epsilon + sq_dist(wi, wj);
            // ∂/∂w_i = 2d/den · w_j − 2d²/den² · (w_i − w_j), symmetric for w_j
            let a = 2.0 * d / den / pairs;
            let c = 2.0 * d * d / (den * den) / pairs;
            for k in 0..n {
                let diff = wi[k] - wj[k];
                let gi = a * wj[k] - c * diff;
                let gj = a * wi[k] + c * diff;
                g.as_mut_slice()[i * n + k] += gi;
                g.as_mut_slice()[j * n + k] += gj;
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(e_regularizer_penalty(&Matrix::identity(3), 1e-6), 0.0);
        let twins = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!((e_regularizer_penalty(&twins, 1e-6) - 4e6).abs() < 1e-6);
        let three = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let want = 2.0 / (1.0 + 1e-6) / 3.0;
        assert!((e_regularizer_penalty(&three, 1e-6) - want).abs() < 1e-12);
        assert_eq!(e_regularizer_penalty(&Matrix::filled(1, 4, 1.0), 1e-6), 0.0);
    }

    #[test]
    fn row_order_irrelevant() {
        let w = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.2, 0.1], [-0.7, 0.4, 0.9]]).unwrap();
        let p = w.select_rows(&[2, 0, 1]);
        assert!((e_regularizer_penalty(&w, 1e-6) - e_regularizer_penalty(&p, 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_differences() {
        let w = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.2, 0.1], [-0.7, 0.4, 0.9]]).unwrap();
        let g = e_regularizer_grad(&w, 1e-6);
        let h = 1e-5;
        for idx in 0..w.len() {
            let mut p = w.clone();
            let mut q = w.clone();
            p.as_mut_slice()[idx] += h;
            q.as_mut_slice()[idx] -= h;
            let fd = (e_regularizer_penalty(&p, 1e-6) - e_regularizer_penalty(&q, 1e-6)) / (2.0 * h);
            let a = g.as_slice()[idx];
            assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8) < 1e-6, "{a} {fd}");
        }
    }
}
