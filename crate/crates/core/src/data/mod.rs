//! Datasets: the XOR table, Gaussian blobs and IDX image files.

mod blobs;
mod idx;

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Result};
use crate::linalg::Matrix;

pub use blobs::{synthetic_blobs, synthetic_blobs_with, BlobOptions};
pub use idx::{load_idx, load_idx_bytes, write_idx};

/// Rows of `features` are samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let d = Dataset {
            features,
            labels,
            num_classes,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.features.rows() {
            return Err(shape_err!(
                "{} labels for {} samples",
                self.labels.len(),
                self.features.rows()
            ));
        }
        if let Some((i, l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.num_classes)
        {
            return Err(domain_err!("label {l} at sample {i} with {} classes", self.num_classes));
        }
        if !self.features.is_finite() {
            return Err(domain_err!("non-finite feature value"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// The first `n` samples (all of them if `n` exceeds the size).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

/// The four XOR points with labels 0, 1, 1, 0.
pub fn xor_dataset() -> Dataset {
    Dataset {
        features: Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
            .expect("static table"),
        labels: vec![0, 1, 1, 0],
        num_classes: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_table() {
        let d = xor_dataset();
        assert_eq!(d.len(), 4);
        assert_eq!(d.num_classes, 2);
        assert_eq!(d.features.row(3), [1.0, 1.0]);
        assert_eq!(d.labels[3], 0);
        assert_eq!(d.labels, vec![0, 1, 1, 0]);
        assert!(d.features.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn validation() {
        assert!(Dataset::new(Matrix::zeros(2, 1), vec![0, 2], 2).is_err());
        assert!(Dataset::new(Matrix::zeros(2, 1), vec![0], 2).is_err());
        assert!(Dataset::new(Matrix::filled(1, 1, f64::NAN), vec![0], 2).is_err());
    }

    #[test]
    fn subsets() {
        let d = xor_dataset();
        let s = d.subset(&[3, 1]);
        assert_eq!(s.labels, vec![0, 1]);
        assert_eq!(s.features.row(1), [0.0, 1.0]);
        assert_eq!(d.head(10).len(), 4);
    }
}
