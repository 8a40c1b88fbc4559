use crate::error::{shape_err, Result};
use crate::linalg::Matrix;

/// Column means of a token matrix.
pub fn global_avg_pool(tokens: &Matrix) -> Result<Vec<f64>> {
    if tokens.rows() == 0 {
        return Err(shape_err!("global pooling over zero tokens"));
    }
    Ok(tokens.col_means())
}

pub fn global_avg_pool_backward(tokens: usize, upstream: &[f64]) -> Matrix {
    let share: Vec<f64> = upstream.iter().map(|g| g / tokens as f64).collect();
    let mut out = Matrix::zeros(tokens, upstream.len());
    for r in 0..tokens {
        out.row_mut(r).copy_from_slice(&share);
    }
    out
}
