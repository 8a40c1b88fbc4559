use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};

/// Per-neuron FLOP model: dot neuron with ReLU versus yat neuron.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopCounts {
    pub d: u64,
    /// `2d + 1`
    pub traditional: u64,
    /// `5d − 1`
    pub yat: u64,
    pub ratio: f64,
}

pub fn flop_model(d: u64) -> Result<FlopCounts> {
    if d == 0 {
        return Err(domain_err!("input dimension must be at least 1"));
    }
    let traditional = 2 * d + 1;
    let yat = 5 * d - 1;
    Ok(FlopCounts {
        d,
        traditional,
        yat,
        ratio: yat as f64 / traditional as f64,
    })
}

/// Per-product FLOP figures as tabulated alongside the metric-property
/// comparison: dot `d`, Euclidean norm `3d`, cosine `4d + 1`, E and Ē `5d − 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductFlopTable {
    pub d: u64,
    pub dot: u64,
    pub euclidean: u64,
    pub cosine: u64,
    pub yat: u64,
    pub posi_yat: u64,
}

pub fn product_flop_table(d: u64) -> Result<ProductFlopTable> {
    if d == 0 {
        return Err(domain_err!("input dimension must be at least 1"));
    }
    Ok(ProductFlopTable {
        d,
        dot: d,
        euclidean: 3 * d,
        cosine: 4 * d + 1,
        yat: 5 * d - 1,
        posi_yat: 5 * d - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_dims() {
        let f = flop_model(1).unwrap();
        assert_eq!((f.traditional, f.yat), (3, 4));
        assert!((f.ratio - 4.0 / 3.0).abs() < 1e-15);
        let f = flop_model(100).unwrap();
        assert!((f.ratio - 499.0 / 201.0).abs() < 1e-15);
        assert!((f.ratio - 2.4826).abs() < 1e-4);
    }

    #[test]
    fn large_d_approaches_two_and_a_half() {
        let f = flop_model(1_000_000).unwrap();
        assert!((f.ratio - 2.5).abs() < 1e-5);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(flop_model(0).is_err());
        assert!(product_flop_table(0).is_err());
    }

    #[test]
    fn invariants_hold_over_range() {
        for d in 1..500 {
            let f = flop_model(d).unwrap();
            assert_eq!(f.traditional, 2 * d + 1);
            assert_eq!(f.yat, 5 * d - 1);
            assert_eq!(f.ratio, f.yat as f64 / f.traditional as f64);
        }
    }
}
