use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Result};
use crate::linalg::{dot, sq_dist, Matrix};

pub const DEFAULT_EPSILON: f64 = 1e-6;

fn check_pair(a: &[f64], b: &[f64], epsilon: f64) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape_err!("vector lengths {} and {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(shape_err!("empty vectors"));
    }
    if !(epsilon > 0.0) {
        return Err(domain_err!("epsilon must be positive, got {epsilon}"));
    }
    Ok(())
}

/// `(a·b)² / (ε + ‖b − a‖²)`.
pub fn yat_product(a: &[f64], b: &[f64], epsilon: f64) -> Result<f64> {
    check_pair(a, b, epsilon)?;
    Ok(yat_unchecked(a, b, epsilon))
}

/// `‖b − a‖² / ((a·b)² + ε)`.
pub fn posi_yat_product(a: &[f64], b: &[f64], epsilon: f64) -> Result<f64> {
    check_pair(a, b, epsilon)?;
    Ok(posi_yat_unchecked(a, b, epsilon))
}

#[inline]
pub(crate) fn yat_unchecked(a: &[f64], b: &[f64], epsilon: f64) -> f64 {
    let d = dot(a, b);
    d * d / (epsilon + sq_dist(a, b))
}

#[inline]
pub(crate) fn posi_yat_unchecked(a: &[f64], b: &[f64], epsilon: f64) -> f64 {
    let d = dot(a, b);
    sq_dist(a, b) / (d * d + epsilon)
}

/// Which formula supplies the base of the layer scale `Θ = base^α`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleMode {
    /// `base = n / ln(1 + n)`, `n` = input dimension.
    #[default]
    MainText,
    /// `base = √m / ln(1 + m)`, `m` = output feature count (matches the
    /// reference Flax/PyTorch layers).
    AppendixCode,
}

impl ScaleMode {
    pub fn base(self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(domain_err!("scale dimension must be at least 1"));
        }
        let n = n as f64;
        Ok(match self {
            ScaleMode::MainText => n / n.ln_1p(),
            ScaleMode::AppendixCode => n.sqrt() / n.ln_1p(),
        })
    }

    /// Picks the dimension this mode reads from a layer's shape.
    pub fn dimension(self, inputs: usize, outputs: usize) -> usize {
        match self {
            ScaleMode::MainText => inputs,
            ScaleMode::AppendixCode => outputs,
        }
    }
}

/// `Θ = base(n)^α`.
pub fn scale_theta(n: usize, alpha: f64, mode: ScaleMode) -> Result<f64> {
    Ok(mode.base(n)?.powf(alpha))
}

/// Epsilon, alpha and scale mode shared by yat layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YatConfig {
    pub epsilon: f64,
    pub scale_mode: ScaleMode,
    pub alpha: f64,
}

impl Default for YatConfig {
    fn default() -> Self {
        YatConfig {
            epsilon: DEFAULT_EPSILON,
            scale_mode: ScaleMode::MainText,
            alpha: 1.0,
        }
    }
}

impl YatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(domain_err!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Entry `(i, j)` is `yat_product(row_i, row_j, ε)`.
pub fn pairwise_yat_matrix(w: &Matrix, epsilon: f64) -> Result<Matrix> {
    if !(epsilon > 0.0) {
        return Err(domain_err!("epsilon must be positive, got {epsilon}"));
    }
    let m = w.rows();
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = yat_unchecked(w.row(i), w.row(j), epsilon);
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}
