use crate::error::{domain_err, shape_err, Result};
use crate::linalg::Matrix;

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

fn check(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(shape_err!("{} probability rows for {} labels", probs.rows(), labels.len()));
    }
    if probs.rows() == 0 {
        return Err(shape_err!("cross-entropy over an empty batch"));
    }
    for (r, &l) in labels.iter().enumerate() {
        if l >= probs.cols() {
            return Err(domain_err!("label {l} at row {r} with {} classes", probs.cols()));
        }
    }
    Ok(())
}

/// Mean of `−ln max(p[row, label], 1e-12)`.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check(probs, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -probs.get(r, l).max(PROB_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Gradient of [`cross_entropy`] with respect to `probs`.
pub fn cross_entropy_grad(probs: &Matrix, labels: &[usize]) -> Result<Matrix> {
    check(probs, labels)?;
    let k = labels.len() as f64;
    let mut g = Matrix::zeros(probs.rows(), probs.cols());
    for (r, &l) in labels.iter().enumerate() {
        let p = probs.get(r, l);
        if p > PROB_FLOOR {
            g.set(r, l, -1.0 / (k * p));
        }
    }
    Ok(g)
}

pub fn accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &l)| argmax(probs.row(r)) == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let one_hot = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(cross_entropy(&one_hot, &[0, 1]).unwrap() <= 1e-11);
        let uniform = Matrix::filled(3, 10, 0.1);
        assert!((cross_entropy(&uniform, &[0, 4, 9]).unwrap() - 10f64.ln()).abs() < 1e-12);
        let p = Matrix::from_rows(&[[0.25, 0.75]]).unwrap();
        assert!((cross_entropy(&p, &[1]).unwrap() - 0.287682).abs() < 1e-6);
        assert!(cross_entropy(&p, &[2]).is_err());
    }

    #[test]
    fn clamp_keeps_loss_finite() {
        let p = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let l = cross_entropy(&p, &[1]).unwrap();
        assert!((l - 1e12f64.ln()).abs() < 1e-9);
        assert_eq!(cross_entropy_grad(&p, &[1]).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn grad_matches_difference() {
        let p = Matrix::from_rows(&[[0.2, 0.8], [0.6, 0.4]]).unwrap();
        let g = cross_entropy_grad(&p, &[1, 0]).unwrap();
        let h = 1e-7;
        let mut q = p.clone();
        q.set(0, 1, 0.8 + h);
        let fd = (cross_entropy(&q, &[1, 0]).unwrap() - cross_entropy(&p, &[1, 0]).unwrap()) / h;
        assert!((fd - g.get(0, 1)).abs() < 1e-5);
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn accuracy_counts_argmax() {
        let p = Matrix::from_rows(&[[0.1, 0.9], [0.7, 0.3], [0.5, 0.5]]).unwrap();
        assert!((accuracy(&p, &[1, 1, 0]) - 2.0 / 3.0).abs() < 1e-15);
    }
}
