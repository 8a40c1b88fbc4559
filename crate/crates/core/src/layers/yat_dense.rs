use serde::{Deserialize, Serialize};

use super::{Grads, Params};
use crate::error::{domain_err, shape_err, Result};
use crate::linalg::{orthogonal_init, Matrix, RngState};
use crate::yat::{ScaleMode, DEFAULT_EPSILON};

/// A layer of yat neurons: `y_i = Θ · (w_i·x)² / (ε + ‖x − w_i‖²) + b_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YatDenseParams {
    /// m×n: one row per neuron.
    pub kernel: Matrix,
    pub alpha: f64,
    pub bias: Option<Vec<f64>>,
    pub epsilon: f64,
    pub scale_mode: ScaleMode,
}

/// Forward intermediates needed by the backward pass.
#[derive(Clone, Debug)]
pub struct YatCache {
    input: Matrix,
    dots: Matrix,
    denom: Matrix,
    theta: f64,
    ln_base: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct YatDenseGrads {
    pub kernel: Matrix,
    pub alpha: f64,
    pub bias: Option<Vec<f64>>,
    pub input: Matrix,
}

impl YatDenseGrads {
    /// Parameter gradients in [`Params`] order (the input gradient is dropped).
    pub fn into_param_grads(self) -> Grads {
        let mut g = vec![self.kernel.into_vec(), vec![self.alpha]];
        if let Some(b) = self.bias {
            g.push(b);
        }
        g
    }
}

impl YatDenseParams {
    /// Orthogonally initialised kernel, `alpha = 1`, zero bias when enabled.
    pub fn new(inputs: usize, outputs: usize, use_bias: bool, state: RngState) -> (Self, RngState) {
        let (kernel, state) = orthogonal_init(outputs, inputs, state);
        (
            YatDenseParams {
                kernel,
                alpha: 1.0,
                bias: use_bias.then(|| vec![0.0; outputs]),
                epsilon: DEFAULT_EPSILON,
                scale_mode: ScaleMode::MainText,
            },
            state,
        )
    }

    pub fn from_kernel(kernel: Matrix) -> Self {
        YatDenseParams {
            kernel,
            alpha: 1.0,
            bias: None,
            epsilon: DEFAULT_EPSILON,
            scale_mode: ScaleMode::MainText,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_scale_mode(mut self, mode: ScaleMode) -> Self {
        self.scale_mode = mode;
        self
    }

    pub fn inputs(&self) -> usize {
        self.kernel.cols()
    }

    pub fn outputs(&self) -> usize {
        self.kernel.rows()
    }

    fn scale_base(&self) -> f64 {
        let n = self.scale_mode.dimension(self.inputs(), self.outputs());
        self.scale_mode.base(n.max(1)).expect("dimension is at least 1")
    }

    /// `Θ = base^α`.
    pub fn theta(&self) -> f64 {
        self.scale_base().powf(self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(domain_err!("epsilon must be positive, got {}", self.epsilon));
        }
        if let Some(b) = &self.bias {
            if b.len() != self.outputs() {
                return Err(shape_err!("bias length {} for {} neurons", b.len(), self.outputs()));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_cached(x).map(|(y, _)| y)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, YatCache)> {
        if x.cols() != self.inputs() {
            return Err(shape_err!(
                "yat layer expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            ));
        }
        self.validate()?;
        let dots = x.matmul_t(&self.kernel)?;
        let xx = x.row_sq_norms();
        let ww = self.kernel.row_sq_norms();
        let base = self.scale_base();
        let theta = base.powf(self.alpha);
        let m = self.outputs();
        let mut denom = Matrix::zeros(x.rows(), m);
        let mut y = Matrix::zeros(x.rows(), m);
        for r in 0..x.rows() {
            let drow = dots.row(r);
            let den = denom.row_mut(r);
            for i in 0..m {
                // ‖x‖² + ‖w‖² − 2 x·w, clamped against cancellation
                let dist = (xx[r] + ww[i] - 2.0 * drow[i]).max(0.0);
                den[i] = self.epsilon + dist;
            }
            let den = denom.row(r);
            let out = y.row_mut(r);
            for i in 0..m {
                out[i] = theta * drow[i] * drow[i] / den[i];
            }
            if let Some(b) = &self.bias {
                for (o, bi) in out.iter_mut().zip(b) {
                    *o += bi;
                }
            }
        }
        Ok((
            y,
            YatCache {
                input: x.clone(),
                dots,
                denom,
                theta,
                ln_base: base.ln(),
            },
        ))
    }

    pub fn backward(&self, cache: &YatCache, upstream: &Matrix) -> Result<YatDenseGrads> {
        let (k, m) = cache.dots.shape();
        if upstream.shape() != (k, m) {
            return Err(shape_err!(
                "upstream {}x{} for output {k}x{m}",
                upstream.rows(),
                upstream.cols()
            ));
        }
        // With g = Θ·upstream, a = g·2dot/den, c = −g·dot²/den²:
        //   dW = (A − 2C)ᵀX + 2·diag(colsum C)·W
        //   dX = (A − 2C)W  + 2·diag(rowsum C)·X
        let mut coef = Matrix::zeros(k, m);
        let mut c_rows = vec![0.0; k];
        let mut c_cols = vec![0.0; m];
        let mut d_alpha = 0.0;
        for r in 0..k {
            let dots = cache.dots.row(r);
            let den = cache.denom.row(r);
            let up = upstream.row(r);
            let out = coef.row_mut(r);
            for i in 0..m {
                let ratio = dots[i] / den[i];
                let e = dots[i] * ratio;
                d_alpha += up[i] * e;
                let g = cache.theta * up[i];
                let a = 2.0 * g * ratio;
                let c = -g * ratio * ratio;
                out[i] = a - 2.0 * c;
                c_rows[r] += c;
                c_cols[i] += c;
            }
        }
        d_alpha *= cache.theta * cache.ln_base;

        let mut d_kernel = coef.t_matmul(&cache.input)?;
        for i in 0..m {
            let s = 2.0 * c_cols[i];
            for (g, w) in d_kernel.row_mut(i).iter_mut().zip(self.kernel.row(i)) {
                *g += s * w;
            }
        }
        let mut d_input = coef.matmul(&self.kernel)?;
        for r in 0..k {
            let s = 2.0 * c_rows[r];
            for (g, x) in d_input.row_mut(r).iter_mut().zip(cache.input.row(r)) {
                *g += s * x;
            }
        }
        let d_bias = self.bias.as_ref().map(|_| upstream.col_sums());
        Ok(YatDenseGrads {
            kernel: d_kernel,
            alpha: d_alpha,
            bias: d_bias,
            input: d_input,
        })
    }
}

impl Params for YatDenseParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("kernel", &[self.kernel.rows(), self.kernel.cols()], self.kernel.as_slice());
        f("alpha", &[1], std::slice::from_ref(&self.alpha));
        if let Some(b) = &self.bias {
            f("bias", &[b.len()], b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("kernel", self.kernel.as_mut_slice());
        f("alpha", std::slice::from_mut(&mut self.alpha));
        if let Some(b) = &mut self.bias {
            f("bias", b);
        }
    }
}

pub fn yat_dense_forward(x: &Matrix, params: &YatDenseParams) -> Result<Matrix> {
    params.forward(x)
}

/// Runs the forward pass again and returns exact gradients of
/// `Σ upstream ⊙ forward(x)`.
pub fn yat_dense_backward(
    x: &Matrix,
    params: &YatDenseParams,
    upstream: &Matrix,
) -> Result<YatDenseGrads> {
    let (_, cache) = params.forward_cached(x)?;
    params.backward(&cache, upstream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::yat::yat_product;

    #[test]
    fn orthogonal_input_gives_zero() {
        let p = YatDenseParams::from_kernel(Matrix::from_rows(&[[1.0, 0.0]]).unwrap())
            .with_alpha(2.5)
            .with_bias(vec![0.0]);
        let y = p.forward(&Matrix::from_rows(&[[0.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(y.get(0, 0), 0.0);
    }

    #[test]
    fn coincident_input_unit_scale() {
        let p = YatDenseParams::from_kernel(Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).with_alpha(0.0);
        let y = p.forward(&Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
        assert!((y.get(0, 0) - 4.0e6).abs() < 1e-6);
    }

    #[test]
    fn output_shape() {
        let (p, s) = YatDenseParams::new(3, 7, true, RngState::new(0));
        let (v, _) = s.draw(crate::linalg::DrawKind::StandardNormal, 15).unwrap();
        let x = Matrix::from_vec(5, 3, v).unwrap();
        assert_eq!(p.forward(&x).unwrap().shape(), (5, 7));
        assert!(p.forward(&Matrix::zeros(5, 4)).is_err());
    }

    #[test]
    fn matches_direct_product_definition() {
        let (p, s) = YatDenseParams::new(4, 3, false, RngState::new(9));
        let p = p.with_alpha(0.7);
        let (v, _) = s.draw(crate::linalg::DrawKind::StandardNormal, 8).unwrap();
        let x = Matrix::from_vec(2, 4, v).unwrap();
        let y = p.forward(&x).unwrap();
        for r in 0..2 {
            for i in 0..3 {
                let want = p.theta() * yat_product(x.row(r), p.kernel.row(i), p.epsilon).unwrap();
                assert!((y.get(r, i) - want).abs() <= 1e-10 * want.max(1.0));
            }
        }
    }

    #[test]
    fn bias_free_outputs_non_negative() {
        let (p, s) = YatDenseParams::new(6, 5, false, RngState::new(1));
        let (v, _) = s.draw(crate::linalg::DrawKind::StandardNormal, 60).unwrap();
        let x = Matrix::from_vec(10, 6, v).unwrap();
        assert!(p.forward(&x).unwrap().as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let (p, _) = YatDenseParams::new(3, 2, true, RngState::new(2));
        let x = Matrix::from_rows(&[[0.5, -1.0, 2.0]]).unwrap();
        let g = yat_dense_backward(&x, &p, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.kernel.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(g.alpha, 0.0);
        assert_eq!(g.bias, Some(vec![0.0, 0.0]));
    }

    #[test]
    fn bias_gradient_counts_batch() {
        let (p, _) = YatDenseParams::new(3, 4, true, RngState::new(3));
        let x = Matrix::filled(6, 3, 0.25);
        let g = yat_dense_backward(&x, &p, &Matrix::filled(6, 4, 1.0)).unwrap();
        assert_eq!(g.bias, Some(vec![6.0; 4]));
        let (nb, _) = YatDenseParams::new(3, 4, false, RngState::new(3));
        assert!(yat_dense_backward(&x, &nb, &Matrix::filled(6, 4, 1.0)).unwrap().bias.is_none());
    }

    #[test]
    fn appendix_scale_uses_output_count() {
        let p = YatDenseParams::from_kernel(Matrix::filled(9, 4, 0.1))
            .with_scale_mode(ScaleMode::AppendixCode);
        assert!((p.theta() - 3.0 / 10f64.ln()).abs() < 1e-12);
    }
}
