use super::matrix::{dot, Matrix};
use super::rng::{DrawKind, RngState};

/// Orthogonal initializer: QR of a Gaussian matrix.
///
/// When `rows <= cols` the rows of the result are orthonormal, otherwise the
/// columns are.
pub fn orthogonal_init(rows: usize, cols: usize, state: RngState) -> (Matrix, RngState) {
    let (tall, short) = if rows <= cols { (cols, rows) } else { (rows, cols) };
    let (g, state) = state
        .draw(DrawKind::StandardNormal, tall * short)
        .expect("standard normal draws cannot fail");
    // columns of a tall x short gaussian, stored column-major as `short` vectors
    let mut q: Vec<Vec<f64>> = (0..short)
        .map(|j| (0..tall).map(|i| g[i * short + j]).collect())
        .collect();
    for j in 0..short {
        let (done, rest) = q.split_at_mut(j);
        let v = &mut rest[0];
        // Gram-Schmidt applied twice keeps the basis orthonormal to round-off.
        // R's diagonal is positive by construction, so no sign fix is needed.
        for _ in 0..2 {
            for u in done.iter() {
                let c = dot(u, v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let norm = dot(v, v).sqrt();
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        v.iter_mut().for_each(|x| *x *= s);
    }
    let mut out = Matrix::zeros(rows, cols);
    for (j, col) in q.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            if rows <= cols {
                out.set(j, i, v);
            } else {
                out.set(i, j, v);
            }
        }
    }
    (out, state)
}

/// Gaussian entries with standard deviation `std`.
pub fn normal_init(rows: usize, cols: usize, std: f64, state: RngState) -> (Matrix, RngState) {
    let (v, state) = state
        .draw(DrawKind::StandardNormal, rows * cols)
        .expect("standard normal draws cannot fail");
    let m = Matrix::from_vec(rows, cols, v).expect("sized buffer").scale(std);
    (m, state)
}

/// Uniform entries on `[-bound, bound)`.
pub fn uniform_init(rows: usize, cols: usize, bound: f64, state: RngState) -> (Matrix, RngState) {
    let (v, state) = state
        .draw(DrawKind::Uniform01, rows * cols)
        .expect("uniform draws cannot fail");
    let m = Matrix::from_vec(rows, cols, v)
        .expect("sized buffer")
        .map(|u| (2.0 * u - 1.0) * bound);
    (m, state)
}
