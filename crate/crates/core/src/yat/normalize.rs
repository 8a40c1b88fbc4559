use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Result};

/// How softermax treats negative inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SoftermaxPolicy {
    /// Rejects any negative input.
    Strict,
    /// `max(0, 1 + x)`, falling back to uniform when every term clamps to 0.
    #[default]
    ClampShift,
}

/// `(1 + x_i) / Σ_j (1 + x_j)`.
pub fn softermax(x: &[f64], policy: SoftermaxPolicy) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(shape_err!("softermax of an empty vector"));
    }
    match policy {
        SoftermaxPolicy::Strict => {
            if let Some((i, v)) = x.iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
                return Err(domain_err!("softermax input {i} is {v}; strict policy needs x >= 0"));
            }
            let shifted: Vec<f64> = x.iter().map(|v| 1.0 + v).collect();
            let total: f64 = shifted.iter().sum();
            Ok(shifted.into_iter().map(|v| v / total).collect())
        }
        SoftermaxPolicy::ClampShift => {
            let shifted: Vec<f64> = x.iter().map(|v| (1.0 + v).max(0.0)).collect();
            let total: f64 = shifted.iter().sum();
            if total > 0.0 {
                Ok(shifted.into_iter().map(|v| v / total).collect())
            } else {
                Ok(vec![1.0 / x.len() as f64; x.len()])
            }
        }
    }
}

/// Vector-Jacobian product of softermax at `x` (whose output was `probs`).
pub fn softermax_backward(
    x: &[f64],
    probs: &[f64],
    upstream: &[f64],
    policy: SoftermaxPolicy,
) -> Vec<f64> {
    let active = |v: f64| match policy {
        SoftermaxPolicy::Strict => true,
        SoftermaxPolicy::ClampShift => 1.0 + v > 0.0,
    };
    let total: f64 = x
        .iter()
        .filter(|&&v| active(v))
        .map(|v| 1.0 + v)
        .sum();
    if !(total > 0.0) {
        // uniform fallback is constant in x
        return vec![0.0; x.len()];
    }
    let inner: f64 = upstream.iter().zip(probs).map(|(g, p)| g * p).sum();
    x.iter()
        .zip(upstream)
        .map(|(&v, &g)| if active(v) { (g - inner) / total } else { 0.0 })
        .collect()
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(shape_err!("softmax of an empty vector"));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / total).collect())
}

/// Vector-Jacobian product of softmax given its output.
pub fn softmax_backward(probs: &[f64], upstream: &[f64]) -> Vec<f64> {
    let inner: f64 = upstream.iter().zip(probs).map(|(g, p)| g * p).sum();
    probs
        .iter()
        .zip(upstream)
        .map(|(p, g)| p * (g - inner))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softermax_uniform_on_zeros() {
        let p = softermax(&[0.0, 0.0, 0.0], SoftermaxPolicy::Strict).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softermax_hand_value() {
        let p = softermax(&[1.0, 3.0], SoftermaxPolicy::Strict).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() <= 1e-15);
        assert!((p[1] - 2.0 / 3.0).abs() <= 1e-15);
    }

    #[test]
    fn clamp_shift_hand_value() {
        let p = softermax(&[-2.0, -3.0, 0.0], SoftermaxPolicy::ClampShift).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
        let u = softermax(&[-2.0, -3.0], SoftermaxPolicy::ClampShift).unwrap();
        assert_eq!(u, vec![0.5, 0.5]);
    }

    #[test]
    fn strict_rejects_negative() {
        assert!(softermax(&[0.5, -0.1], SoftermaxPolicy::Strict).is_err());
        assert!(softermax(&[], SoftermaxPolicy::ClampShift).is_err());
    }

    #[test]
    fn softmax_reference_values() {
        // exp(2), exp(1), exp(0.1) normalised
        let p = softmax(&[2.0, 1.0, 0.1]).unwrap();
        for (got, want) in p.iter().zip([0.659001, 0.242433, 0.098566]) {
            assert!((got - want).abs() < 5e-4, "{got} vs {want}");
        }
        let q = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((q[0] - 0.25).abs() < 1e-15 && (q[1] - 0.75).abs() < 1e-15);
        for c in [-1e3, 0.0, 7.5, 1e3] {
            let u = softmax(&[c, c, c]).unwrap();
            assert!(u.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
        assert!(softmax(&[]).is_err());
    }

    fn fd_vjp(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], g: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                let fp = f(&xp);
                let fm = f(&xm);
                fp.iter()
                    .zip(&fm)
                    .zip(g)
                    .map(|((a, b), gi)| gi * (a - b) / (2.0 * h))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = [0.3, 2.0, 0.05, 1.25];
        let g = [0.7, -1.0, 0.2, 0.5];
        for policy in [SoftermaxPolicy::Strict, SoftermaxPolicy::ClampShift] {
            let p = softermax(&x, policy).unwrap();
            let analytic = softermax_backward(&x, &p, &g, policy);
            let numeric = fd_vjp(|v| softermax(v, policy).unwrap(), &x, &g);
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!((a - n).abs() < 1e-8);
            }
        }
        let xs = [-3.0, 0.5, 1.0];
        let p = softermax(&xs, SoftermaxPolicy::ClampShift).unwrap();
        let analytic = softermax_backward(&xs, &p, &g[..3], SoftermaxPolicy::ClampShift);
        let numeric = fd_vjp(|v| softermax(v, SoftermaxPolicy::ClampShift).unwrap(), &xs, &g[..3]);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-8);
        }
        let p = softmax(&x).unwrap();
        let analytic = softmax_backward(&p, &g);
        let numeric = fd_vjp(|v| softmax(v).unwrap(), &x, &g);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-8);
        }
    }
}
