use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{domain_err, shape_err, Result};
use crate::linalg::{DrawKind, Matrix, RngState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingConfig {
    /// Probability that a token is replaced.
    pub p: f64,
    /// Learnable replacement token.
    pub mask_token: Vec<f64>,
}

impl MaskingConfig {
    pub fn new(p: f64, width: usize) -> Self {
        MaskingConfig {
            p,
            mask_token: vec![0.0; width],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(domain_err!("masking ratio {} outside [0, 1]", self.p));
        }
        Ok(())
    }
}

impl Params for MaskingConfig {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("mask_token", &[self.mask_token.len()], &self.mask_token);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("mask_token", &mut self.mask_token);
    }
}

/// Replaces each token by `mask_token` with probability `p` during training.
/// The returned flags mark replaced rows. Inference is the identity and
/// consumes no randomness.
pub fn token_mask(
    x: &Matrix,
    cfg: &MaskingConfig,
    state: RngState,
    training: bool,
) -> Result<(Matrix, Vec<bool>, RngState)> {
    cfg.validate()?;
    if cfg.mask_token.len() != x.cols() {
        return Err(shape_err!(
            "mask token has width {}, tokens have {}",
            cfg.mask_token.len(),
            x.cols()
        ));
    }
    if !training || cfg.p == 0.0 {
        return Ok((x.clone(), vec![false; x.rows()], state));
    }
    let (u, state) = state.draw(DrawKind::Uniform01, x.rows())?;
    let mask: Vec<bool> = u.iter().map(|&v| v < cfg.p).collect();
    let mut out = x.clone();
    for (r, &m) in mask.iter().enumerate() {
        if m {
            out.row_mut(r).copy_from_slice(&cfg.mask_token);
        }
    }
    Ok((out, mask, state))
}

/// Gradients with respect to the tokens and the mask token.
pub fn token_mask_backward(mask: &[bool], upstream: &Matrix) -> (Matrix, Vec<f64>) {
    let mut dx = upstream.clone();
    let mut dtoken = vec![0.0; upstream.cols()];
    for (r, &m) in mask.iter().enumerate() {
        if m {
            for (d, g) in dtoken.iter_mut().zip(upstream.row(r)) {
                *d += g;
            }
            dx.row_mut(r).fill(0.0);
        }
    }
    (dx, dtoken)
}
