use crate::error::{domain_err, Result};
use crate::linalg::{DrawKind, Matrix, RngState};

/// Per-entry multipliers applied by a dropout pass: `0` or `1/(1−rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    scale: Vec<f64>,
}

impl DropoutMask {
    pub fn dropped_fraction(&self) -> f64 {
        if self.scale.is_empty() {
            return 0.0;
        }
        self.scale.iter().filter(|&&s| s == 0.0).count() as f64 / self.scale.len() as f64
    }
}

/// Inverted dropout. In training mode entries are zeroed with probability
/// `rate` and survivors scaled by `1/(1−rate)`; otherwise the input passes
/// through and no randomness is consumed.
pub fn dropout(
    a: &Matrix,
    rate: f64,
    state: RngState,
    training: bool,
) -> Result<(Matrix, Option<DropoutMask>, RngState)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(domain_err!("dropout rate {rate} outside [0, 1)"));
    }
    if !training || rate == 0.0 {
        return Ok((a.clone(), None, state));
    }
    let (u, state) = state.draw(DrawKind::Uniform01, a.len())?;
    let keep = 1.0 / (1.0 - rate);
    let scale: Vec<f64> = u.iter().map(|&v| if v < rate { 0.0 } else { keep }).collect();
    let mut out = a.clone();
    for (o, s) in out.as_mut_slice().iter_mut().zip(&scale) {
        *o *= s;
    }
    Ok((out, Some(DropoutMask { scale }), state))
}

pub fn dropout_backward(mask: Option<&DropoutMask>, upstream: &Matrix) -> Matrix {
    match mask {
        None => upstream.clone(),
        Some(m) => {
            let mut g = upstream.clone();
            for (v, s) in g.as_mut_slice().iter_mut().zip(&m.scale) {
                *v *= s;
            }
            g
        }
    }
}
