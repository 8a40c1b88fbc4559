use serde::{Deserialize, Serialize};

use super::loss::mse;
use crate::data::xor_dataset;
use crate::error::{domain_err, Result};
use crate::linalg::{DrawKind, RngState};
use crate::yat::DEFAULT_EPSILON;

pub const XOR_GRID_SIZE: usize = 400;
pub const XOR_GRID_MIN: f64 = -0.5;
pub const XOR_GRID_MAX: f64 = 1.5;

const LEARNING_RATE: f64 = 0.05;
const STEPS: usize = 5000;

/// One unscaled yat neuron `E(w, x) + b` fitted to XOR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XorSolution {
    pub weights: [f64; 2],
    pub bias: f64,
    pub epsilon: f64,
    pub outputs: [f64; 4],
    pub mse: f64,
    /// Fraction of the four points classified correctly at threshold 0.5.
    pub accuracy: f64,
    /// Index of the restart that produced this fit.
    pub restart: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionGrid {
    pub size: usize,
    pub min: f64,
    pub max: f64,
    /// Neuron outputs, row-major with y as the outer index.
    pub values: Vec<f64>,
}

impl DecisionGrid {
    pub fn coordinate(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * i as f64 / (self.size - 1) as f64
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.size + ix]
    }
}

pub fn xor_forward(w: [f64; 2], b: f64, epsilon: f64, x: [f64; 2]) -> f64 {
    let d = w[0] * x[0] + w[1] * x[1];
    let dist = (x[0] - w[0]).powi(2) + (x[1] - w[1]).powi(2);
    d * d / (epsilon + dist) + b
}

fn points() -> ([[f64; 2]; 4], [f64; 4]) {
    let d = xor_dataset();
    let mut xs = [[0.0; 2]; 4];
    let mut ys = [0.0; 4];
    for r in 0..4 {
        xs[r] = [d.features.get(r, 0), d.features.get(r, 1)];
        ys[r] = d.labels[r] as f64;
    }
    (xs, ys)
}

fn fit(mut w: [f64; 2], mut b: f64, eps: f64) -> ([f64; 2], f64) {
    let (xs, ys) = points();
    for _ in 0..STEPS {
        let mut gw = [0.0; 2];
        let mut gb = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let d = w[0] * x[0] + w[1] * x[1];
            let den = eps + (x[0] - w[0]).powi(2) + (x[1] - w[1]).powi(2);
            let r = 2.0 * (d * d / den + b - y) / 4.0;
            // ∂E/∂w = 2d·x/den + 2d²(x − w)/den²
            for k in 0..2 {
                gw[k] += r * (2.0 * d * x[k] / den + 2.0 * d * d * (x[k] - w[k]) / (den * den));
            }
            gb += r;
        }
        if !(gw[0].is_finite() && gw[1].is_finite() && gb.is_finite()) {
            break;
        }
        w[0] -= LEARNING_RATE * gw[0];
        w[1] -= LEARNING_RATE * gw[1];
        b -= LEARNING_RATE * gb;
    }
    (w, b)
}

fn score(w: [f64; 2], b: f64, eps: f64, restart: usize) -> XorSolution {
    let (xs, ys) = points();
    let mut outputs = [0.0; 4];
    for r in 0..4 {
        outputs[r] = xor_forward(w, b, eps, xs[r]);
    }
    let hits = outputs
        .iter()
        .zip(&ys)
        .filter(|(o, y)| (**o > 0.5) == (**y > 0.5))
        .count();
    XorSolution {
        weights: w,
        bias: b,
        epsilon: eps,
        outputs,
        mse: mse(&outputs, &ys),
        accuracy: hits as f64 / 4.0,
        restart,
    }
}

/// Gradient descent on MSE from `restarts` Gaussian initialisations; keeps
/// the most accurate fit, ties broken by lower MSE.
pub fn solve_xor(restarts: usize, state: RngState) -> Result<(XorSolution, DecisionGrid, RngState)> {
    if restarts == 0 {
        return Err(domain_err!("need at least one restart"));
    }
    let eps = DEFAULT_EPSILON;
    let (init, state) = state.draw(DrawKind::StandardNormal, 2 * restarts)?;
    let mut best: Option<XorSolution> = None;
    for r in 0..restarts {
        let (w, b) = fit([init[2 * r], init[2 * r + 1]], 0.0, eps);
        let s = score(w, b, eps, r);
        let better = match &best {
            None => true,
            Some(cur) => s.accuracy > cur.accuracy || (s.accuracy == cur.accuracy && s.mse < cur.mse),
        };
        if better && s.mse.is_finite() {
            best = Some(s);
        }
    }
    let best = best.unwrap_or_else(|| score([0.0, 0.0], 0.0, eps, 0));
    let mut grid = DecisionGrid {
        size: XOR_GRID_SIZE,
        min: XOR_GRID_MIN,
        max: XOR_GRID_MAX,
        values: Vec::with_capacity(XOR_GRID_SIZE * XOR_GRID_SIZE),
    };
    for iy in 0..XOR_GRID_SIZE {
        for ix in 0..XOR_GRID_SIZE {
            let p = [grid.coordinate(ix), grid.coordinate(iy)];
            grid.values.push(xor_forward(best.weights, best.bias, eps, p));
        }
    }
    Ok((best, grid, state))
}
