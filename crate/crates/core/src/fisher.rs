//! Fisher-vector encoding of STL buckets against a fitted mixture.
//!
//! Layout of the `2*K*D` vector: all mean gradients (component-major,
//! dimension-minor) followed by all standard-deviation gradients in the same
//! order. Weight gradients are not part of the encoding.

use serde::{Deserialize, Serialize};

use crate::gmm::{responsibilities_checked, GmmModel};
use crate::numeric::{norm2, CompensatedSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherVector {
    pub values: Vec<f64>,
    /// Number of STL points encoded.
    pub bucket_size: usize,
}

/// Summed log-likelihood gradients of the bucket with respect to every
/// `mu_k^d` and `sigma_k^d`, before scaling and normalization. The second
/// value counts points whose densities all underflowed.
pub fn fisher_gradients(model: &GmmModel, bucket: &[Vec<f64>]) -> (Vec<f64>, usize) {
    let k = model.k();
    let d = model.dim();
    let mut acc = vec![CompensatedSum::default(); 2 * k * d];
    let mut underflows = 0;
    let sigmas: Vec<Vec<f64>> = model
        .vars
        .iter()
        .map(|v| v.iter().map(|s2| s2.sqrt()).collect())
        .collect();
    for x in bucket {
        let (gamma, underflow) = responsibilities_checked(model, x);
        underflows += usize::from(underflow);
        for c in 0..k {
            for dim in 0..d {
                let diff = x[dim] - model.means[c][dim];
                let var = model.vars[c][dim];
                let sigma = sigmas[c][dim];
                acc[c * d + dim].add(gamma[c] * diff / var);
                acc[k * d + c * d + dim].add(gamma[c] * (diff * diff / (var * sigma) - 1.0 / sigma));
            }
        }
    }
    (acc.iter().map(CompensatedSum::value).collect(), underflows)
}

/// Encodes a non-empty bucket: gradients scaled by `1/T`, then
/// l2-normalized. A zero gradient stays zero. An empty bucket has no
/// encoding and yields `None`.
pub fn fisher_vector(model: &GmmModel, bucket: &[Vec<f64>]) -> Option<FisherVector> {
    if bucket.is_empty() {
        return None;
    }
    let t = bucket.len();
    let (mut values, _) = fisher_gradients(model, bucket);
    values.iter_mut().for_each(|v| *v /= t as f64);
    let norm = norm2(&values);
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Some(FisherVector {
        values,
        bucket_size: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_at_the_mean() {
        let model = GmmModel::new(vec![0.0], vec![vec![1.0, 2.0, 3.0, 4.0]], vec![vec![0.25, 1.0, 4.0, 9.0]]).unwrap();
        let (g, _) = fisher_gradients(&model, &[vec![1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(&g[..4], &[0.0; 4]);
        assert_eq!(&g[4..], &[-2.0, -1.0, -0.5, -1.0 / 3.0]);
    }

    #[test]
    fn dimension_and_norm() {
        let k = 8;
        let means = (0..k).map(|c| vec![c as f64; 4]).collect();
        let model = GmmModel::new(vec![0.0; k], means, vec![vec![1.0; 4]; k]).unwrap();
        let fv = fisher_vector(&model, &[vec![0.3, 1.2, 2.5, -0.7], vec![3.0, 3.1, 2.9, 3.3]]).unwrap();
        assert_eq!(fv.values.len(), 64);
        assert_eq!(fv.bucket_size, 2);
        assert!((norm2(&fv.values) - 1.0).abs() < 1e-9);
        assert!(fisher_vector(&model, &[]).is_none());
    }
}
