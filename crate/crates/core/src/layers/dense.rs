use serde::{Deserialize, Serialize};

use super::{Grads, Params};
use crate::error::{shape_err, Result};
use crate::linalg::{uniform_init, Matrix, RngState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    /// tanh approximation of GeLU.
    GeLU,
    #[default]
    None,
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::ReLU => z.max(0.0),
            Activation::GeLU => {
                let u = SQRT_2_OVER_PI * (z + GELU_C * z * z * z);
                0.5 * z * (1.0 + u.tanh())
            }
            Activation::None => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::GeLU => {
                let u = SQRT_2_OVER_PI * (z + GELU_C * z * z * z);
                let t = u.tanh();
                let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * z * z);
                0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du
            }
            Activation::None => 1.0,
        }
    }
}

/// Baseline affine layer `f(XWᵀ + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    /// m×n.
    pub weight: Matrix,
    /// Empty when the layer has no bias.
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Matrix,
    pre: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub input: Matrix,
}

impl DenseGrads {
    pub fn into_param_grads(self) -> Grads {
        vec![self.weight.into_vec(), self.bias]
    }
}

impl DenseParams {
    /// Uniform `±1/√n` weights (He-style bound `√(6/n)` for ReLU/GeLU), zero bias.
    pub fn new(inputs: usize, outputs: usize, activation: Activation, state: RngState) -> (Self, RngState) {
        let bound = match activation {
            Activation::None => (3.0 / inputs as f64).sqrt(),
            _ => (6.0 / inputs as f64).sqrt(),
        };
        let (weight, state) = uniform_init(outputs, inputs, bound, state);
        (
            DenseParams {
                weight,
                bias: vec![0.0; outputs],
                activation,
            },
            state,
        )
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_cached(x).map(|(y, _)| y)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, DenseCache)> {
        if x.cols() != self.inputs() {
            return Err(shape_err!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            ));
        }
        if !self.bias.is_empty() && self.bias.len() != self.outputs() {
            return Err(shape_err!("bias length {} for {} outputs", self.bias.len(), self.outputs()));
        }
        let mut pre = x.matmul_t(&self.weight)?;
        for r in 0..pre.rows() {
            for (z, b) in pre.row_mut(r).iter_mut().zip(&self.bias) {
                *z += b;
            }
        }
        let act = self.activation;
        let y = pre.map(|z| act.apply(z));
        Ok((
            y,
            DenseCache {
                input: x.clone(),
                pre,
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache, upstream: &Matrix) -> Result<DenseGrads> {
        if upstream.shape() != cache.pre.shape() {
            return Err(shape_err!(
                "upstream {:?} for output {:?}",
                upstream.shape(),
                cache.pre.shape()
            ));
        }
        let act = self.activation;
        let mut dz = upstream.clone();
        for (g, &z) in dz.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            *g *= act.derivative(z);
        }
        Ok(DenseGrads {
            weight: dz.t_matmul(&cache.input)?,
            bias: if self.bias.is_empty() {
                Vec::new()
            } else {
                dz.col_sums()
            },
            input: dz.matmul(&self.weight)?,
        })
    }
}

impl Params for DenseParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("weight", &[self.weight.rows(), self.weight.cols()], self.weight.as_slice());
        f("bias", &[self.bias.len()], &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("weight", self.weight.as_mut_slice());
        f("bias", &mut self.bias);
    }
}

pub fn dense_forward(x: &Matrix, params: &DenseParams) -> Result<Matrix> {
    params.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_affine_example() {
        let p = DenseParams {
            weight: Matrix::from_rows(&[[0.5, -1.0, 0.2]]).unwrap(),
            bias: vec![0.0],
            activation: Activation::None,
        };
        let z = p.forward(&Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap()).unwrap();
        assert!((z.get(0, 0) + 0.9).abs() < 1e-12);
    }

    #[test]
    fn relu_example() {
        let z = [-0.9, 1.5, -0.3, 2.1];
        let a: Vec<f64> = z.iter().map(|&v| Activation::ReLU.apply(v)).collect();
        assert_eq!(a, vec![0.0, 1.5, 0.0, 2.1]);
    }

    #[test]
    fn gelu_fixed_point_and_derivative() {
        assert_eq!(Activation::GeLU.apply(0.0), 0.0);
        for z in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-6;
            let fd = (Activation::GeLU.apply(z + h) - Activation::GeLU.apply(z - h)) / (2.0 * h);
            assert!((fd - Activation::GeLU.derivative(z)).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_mismatch() {
        let (p, _) = DenseParams::new(3, 2, Activation::ReLU, RngState::new(0));
        assert!(p.forward(&Matrix::zeros(1, 4)).is_err());
    }
}
