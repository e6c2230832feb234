//! Logistic-regression baseline on max-pooled bag features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmil::{clamp_prob, logistic, MilBag};
use crate::stl::StandardizationStats;

/// Element-wise max over each component's instances, concatenated; a
/// component without instances contributes zeros.
pub fn pooled_features(bag: &MilBag, dims: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dims.iter().sum());
    for (inst, &d) in bag.components.iter().zip(dims) {
        let mut m = vec![0.0; d];
        if let Some(first) = inst.first() {
            m.copy_from_slice(first);
            for x in &inst[1..] {
                for (a, b) in m.iter_mut().zip(x) {
                    *a = a.max(*b);
                }
            }
        }
        out.extend(m);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub iters: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            iters: 2000,
            learning_rate: 0.5,
            l2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub dims: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub stats: StandardizationStats,
}

impl LogisticModel {
    pub fn score(&self, bag: &MilBag) -> f64 {
        let z = self.stats.apply(&pooled_features(bag, &self.dims));
        clamp_prob(logistic(self.bias + crate::numeric::dot(&self.weights, &z)))
    }
}

/// Full-batch gradient ascent on the L2-penalized mean log-likelihood.
pub fn fit_logistic(bags: &[MilBag], labels: &[u8], dims: &[usize], opts: &LogisticOptions) -> Result<LogisticModel> {
    if bags.len() != labels.len() || !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::InvalidArgument("logistic baseline needs labeled bags of both classes".into()));
    }
    let raw: Vec<Vec<f64>> = bags.iter().map(|b| pooled_features(b, dims)).collect();
    let stats = StandardizationStats::fit(&raw);
    let x: Vec<Vec<f64>> = raw.iter().map(|r| stats.apply(r)).collect();
    let d = dims.iter().sum();
    let n = x.len() as f64;
    let mut w = vec![0.0; d];
    let mut bias = 0.0;
    for _ in 0..opts.iters {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (xi, &y) in x.iter().zip(labels) {
            let r = f64::from(y) - logistic(bias + crate::numeric::dot(&w, xi));
            gb += r;
            for (g, v) in gw.iter_mut().zip(xi) {
                *g += r * v;
            }
        }
        bias += opts.learning_rate * gb / n;
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj += opts.learning_rate * (g / n - opts.l2 * *wj);
        }
    }
    Ok(LogisticModel {
        dims: dims.to_vec(),
        weights: w,
        bias,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_takes_maxima_and_zero_fills() {
        let bag = MilBag {
            components: vec![vec![vec![1.0, 5.0], vec![3.0, 2.0]], vec![]],
        };
        assert_eq!(pooled_features(&bag, &[2, 3]), vec![3.0, 5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn separates_shifted_bags() {
        let bags: Vec<MilBag> = (0..20)
            .map(|i| MilBag {
                components: vec![vec![vec![(i % 2) as f64 * 2.0 + (i as f64) * 0.01]]],
            })
            .collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let m = fit_logistic(&bags, &labels, &[1], &LogisticOptions::default()).unwrap();
        for (b, y) in bags.iter().zip(&labels) {
            assert_eq!(m.score(b) > 0.5, *y == 1);
        }
    }
}
