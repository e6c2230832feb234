//! Diagonal-covariance Gaussian mixture fitted by EM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::kmeans::kmeans_pp_seeds;
use crate::stl::StandardizationStats;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mixture weights are soft-max re-parametrized: `w_k = exp(a_k) / sum_i exp(a_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub alphas: Vec<f64>,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
    log_norm: Vec<f64>,
}

impl GmmModel {
    pub fn new(alphas: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> Result<Self> {
        let k = alphas.len();
        if k == 0 || means.len() != k || vars.len() != k {
            return Err(Error::InvalidArgument("inconsistent mixture shapes".into()));
        }
        let d = means[0].len();
        if means.iter().chain(&vars).any(|v| v.len() != d) {
            return Err(Error::InvalidArgument("inconsistent mixture dimensions".into()));
        }
        if vars.iter().flatten().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("variances must be positive".into()));
        }
        let weights = softmax(&alphas);
        let log_norm = vars
            .iter()
            .map(|v| -0.5 * v.iter().map(|s2| LN_2PI + s2.ln()).sum::<f64>())
            .collect();
        Ok(Self {
            alphas,
            weights,
            means,
            vars,
            log_norm,
        })
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `log(w_k) + log p_k(x)` for every component.
    pub fn weighted_log_densities(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                let quad: f64 = x
                    .iter()
                    .zip(&self.means[k])
                    .zip(&self.vars[k])
                    .map(|((xd, m), v)| (xd - m) * (xd - m) / v)
                    .sum();
                self.weights[k].ln() + self.log_norm[k] - 0.5 * quad
            })
            .collect()
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.weighted_log_densities(x))
    }

    pub fn mean_log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        data.iter().map(|x| self.log_likelihood(x)).sum::<f64>() / data.len().max(1) as f64
    }
}

fn softmax(alphas: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(alphas);
    alphas.iter().map(|a| (a - lse).exp()).collect()
}

/// Posterior component probabilities, computed in log space. The flag is
/// set when every weighted density underflows, in which case the result is
/// uniform.
pub fn responsibilities_checked(model: &GmmModel, x: &[f64]) -> (Vec<f64>, bool) {
    let logs = model.weighted_log_densities(x);
    let lse = log_sum_exp(&logs);
    if !lse.is_finite() {
        let k = model.k();
        return (vec![1.0 / k as f64; k], true);
    }
    (logs.iter().map(|l| (l - lse).exp()).collect(), false)
}

pub fn responsibilities(model: &GmmModel, x: &[f64]) -> Vec<f64> {
    responsibilities_checked(model, x).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
    /// Variance floor as a fraction of each dimension's data variance.
    pub var_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            var_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean log-likelihood evaluated before each M-step.
    pub log_likelihoods: Vec<f64>,
    /// Iterations at which a collapsed component was re-seeded.
    pub reseeds: Vec<usize>,
}

/// Fits a `k`-component diagonal GMM. Needs at least `10 * k` points.
pub fn fit_gmm(data: &[Vec<f64>], k: usize, seed: u64, opts: &EmOptions) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if data.len() < 10 * k {
        return Err(Error::Sizing {
            what: "points for GMM fit",
            needed: 10 * k,
            got: data.len(),
        });
    }
    let n = data.len();
    let d = data[0].len();
    let (_, global_var) = moments(data);
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (opts.var_floor * v).max(f64::MIN_POSITIVE))
        .collect();
    let init_var: Vec<f64> = global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();

    let centers = kmeans_pp_seeds(data, k, seed);
    let mut model = GmmModel::new(vec![0.0; k], centers, vec![init_var.clone(); k])?;
    let mut lls = Vec::new();
    let mut reseeds = Vec::new();
    let mut resp = vec![vec![0.0; k]; n];

    for iter in 0..opts.max_iters.max(1) {
        // E-step
        let mut total = 0.0;
        let mut point_ll = vec![0.0; n];
        for (i, x) in data.iter().enumerate() {
            let logs = model.weighted_log_densities(x);
            let lse = log_sum_exp(&logs);
            point_ll[i] = lse;
            total += lse;
            if lse.is_finite() {
                for (r, l) in resp[i].iter_mut().zip(&logs) {
                    *r = (l - lse).exp();
                }
            } else {
                resp[i].iter_mut().for_each(|r| *r = 1.0 / k as f64);
            }
        }
        let ll = total / n as f64;
        let converged = lls.last().is_some_and(|prev: &f64| ll - prev < opts.tol);
        lls.push(ll);
        if converged {
            break;
        }

        // M-step
        let mut nk = vec![0.0; k];
        let mut means = vec![vec![0.0; d]; k];
        for (x, r) in data.iter().zip(&resp) {
            for c in 0..k {
                nk[c] += r[c];
                for (m, xd) in means[c].iter_mut().zip(x) {
                    *m += r[c] * xd;
                }
            }
        }
        let mut collapsed = Vec::new();
        for c in 0..k {
            if nk[c] < 1e-8 {
                collapsed.push(c);
                continue;
            }
            means[c].iter_mut().for_each(|m| *m /= nk[c]);
        }
        let mut vars = vec![vec![0.0; d]; k];
        for (x, r) in data.iter().zip(&resp) {
            for c in 0..k {
                for ((v, xd), m) in vars[c].iter_mut().zip(x).zip(&means[c]) {
                    *v += r[c] * (xd - m) * (xd - m);
                }
            }
        }
        for c in 0..k {
            if nk[c] >= 1e-8 {
                for (v, f) in vars[c].iter_mut().zip(&floor) {
                    *v = (*v / nk[c]).max(*f);
                }
            }
        }
        if !collapsed.is_empty() {
            reseeds.push(iter);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| point_ll[a].total_cmp(&point_ll[b]).then(a.cmp(&b)));
            for (slot, &c) in collapsed.iter().enumerate() {
                means[c] = data[order[slot % n]].clone();
                vars[c] = init_var.clone();
                nk[c] = 1.0;
            }
        }
        let alphas: Vec<f64> = nk.iter().map(|w| (w / n as f64).ln()).collect();
        model = GmmModel::new(alphas, means, vars)?;
    }
    Ok(GmmFit {
        model,
        log_likelihoods: lls,
        reseeds,
    })
}

fn moments(data: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = data[0].len();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for x in data {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

/// On-disk form of a fitted mixture together with its input standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFile {
    pub k: usize,
    pub d: usize,
    pub alphas: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
    pub stats: StandardizationStats,
}

pub const GMM_KIND: &str = "gmm";

impl GmmFile {
    pub fn new(model: &GmmModel, stats: StandardizationStats) -> Self {
        Self {
            k: model.k(),
            d: model.dim(),
            alphas: model.alphas.clone(),
            means: model.means.clone(),
            vars: model.vars.clone(),
            stats,
        }
    }

    pub fn model(&self) -> Result<GmmModel> {
        let m = GmmModel::new(self.alphas.clone(), self.means.clone(), self.vars.clone())?;
        if m.k() != self.k || m.dim() != self.d {
            return Err(Error::InvalidArgument("gmm file shape mismatch".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand_distr::{Distribution, Normal};

    fn two_clusters(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed);
        let noise = Normal::new(0.0, 0.2).unwrap();
        (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { -3.0 } else { 3.0 };
                (0..4).map(|_| c + noise.sample(&mut rng)).collect()
            })
            .collect()
    }

    #[test]
    fn recovers_two_clusters() {
        let data = two_clusters(400, 3);
        let fit = fit_gmm(&data, 2, 11, &EmOptions::default()).unwrap();
        let m = &fit.model;
        let mut centers: Vec<f64> = m.means.iter().map(|mu| mu[0]).collect();
        centers.sort_by(f64::total_cmp);
        assert!(centers[0] < 0.0 && centers[1] > 0.0);
        for mu in &m.means {
            let target = if mu[0] < 0.0 { -3.0 } else { 3.0 };
            assert!(mu.iter().all(|v| (v - target).abs() < 0.5));
        }
        for w in &m.weights {
            assert!((w - 0.5).abs() < 0.05);
        }
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_component_is_closed_form() {
        let data = two_clusters(100, 5);
        let opts = EmOptions {
            max_iters: 1,
            ..EmOptions::default()
        };
        let fit = fit_gmm(&data, 1, 0, &opts).unwrap();
        let n = data.len() as f64;
        for d in 0..4 {
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / n;
            let var = data.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((fit.model.means[0][d] - mean).abs() < 1e-12);
            assert!((fit.model.vars[0][d] - var).abs() < 1e-12);
        }
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let data = two_clusters(600, 9);
        let opts = EmOptions {
            max_iters: 50,
            tol: f64::NEG_INFINITY,
            ..EmOptions::default()
        };
        let fit = fit_gmm(&data, 4, 1, &opts).unwrap();
        assert_eq!(fit.log_likelihoods.len(), 50);
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn refuses_small_samples() {
        let data = two_clusters(15, 1);
        assert!(matches!(fit_gmm(&data, 2, 0, &EmOptions::default()), Err(Error::Sizing { .. })));
    }

    #[test]
    fn responsibility_examples() {
        let single = GmmModel::new(vec![0.0], vec![vec![0.0; 4]], vec![vec![1.0; 4]]).unwrap();
        assert_eq!(responsibilities(&single, &[5.0, 1.0, 0.0, 2.0]), vec![1.0]);

        let two = GmmModel::new(
            vec![0.0, 0.0],
            vec![vec![-5.0; 4], vec![5.0; 4]],
            vec![vec![1.0; 4], vec![1.0; 4]],
        )
        .unwrap();
        assert!(responsibilities(&two, &[-5.0; 4])[0] > 0.99);
        let mid = responsibilities(&two, &[0.0; 4]);
        assert!((mid[0] - 0.5).abs() < 1e-15 && (mid[1] - 0.5).abs() < 1e-15);

        let far = responsibilities_checked(&two, &[f64::INFINITY; 4]);
        assert!(far.1);
        assert_eq!(far.0, vec![0.5, 0.5]);
    }

    #[test]
    fn model_file_round_trips_bit_exact() {
        let data = two_clusters(200, 2);
        let fit = fit_gmm(&data, 3, 4, &EmOptions::default()).unwrap();
        let stats = StandardizationStats {
            mean: vec![0.1, 1.0 / 3.0, 2.0, 3.0],
            std: vec![1.0, 0.7, 1e-9, 5.5],
        };
        let file = GmmFile::new(&fit.model, stats);
        let text = crate::artifact::to_string(GMM_KIND, &file).unwrap();
        let back: GmmFile = crate::artifact::from_str(GMM_KIND, &text, "mem").unwrap();
        assert_eq!(back, file);
        assert_eq!(back.model().unwrap(), fit.model);
        assert_eq!(crate::artifact::to_string(GMM_KIND, &back).unwrap(), text);
    }
}
