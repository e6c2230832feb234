//! Latent Dirichlet allocation by collapsed Gibbs sampling, with fold-in
//! inference of per-document topic proportions.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iters: usize,
    pub seed: u64,
}

impl LdaParams {
    /// `alpha = 50 / T`, `beta = 0.01`, 500 sweeps.
    pub fn with_topics(topics: usize, seed: u64) -> Self {
        Self {
            topics,
            alpha: 50.0 / topics as f64,
            beta: 0.01,
            iters: 500,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub n_topics: usize,
    pub n_words: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Topic-word counts averaged over the retained post-burn-in sweeps.
    pub topic_word_counts: Vec<Vec<f64>>,
    pub topic_totals: Vec<f64>,
}

pub const LDA_KIND: &str = "lda";

impl LdaModel {
    /// `phi[t][w] = (n_tw + beta) / (n_t + W * beta)`.
    pub fn topic_word_probs(&self) -> Vec<Vec<f64>> {
        let wb = self.n_words as f64 * self.beta;
        self.topic_word_counts
            .iter()
            .zip(&self.topic_totals)
            .map(|(row, total)| row.iter().map(|c| (c + self.beta) / (total + wb)).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LdaFit {
    pub model: LdaModel,
    pub skipped_empty_docs: usize,
}

/// Live sampler state over the non-empty documents of a corpus.
pub(crate) struct GibbsState<'a> {
    docs: Vec<&'a [usize]>,
    z: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<u32>>,
    pub(crate) topic_word: Vec<Vec<u32>>,
    topic_totals: Vec<u32>,
    alpha: f64,
    beta: f64,
    n_words: usize,
    probs: Vec<f64>,
}

impl<'a> GibbsState<'a> {
    fn new(docs: Vec<&'a [usize]>, n_topics: usize, n_words: usize, alpha: f64, beta: f64, rng: &mut Rng) -> Self {
        let mut state = Self {
            z: Vec::with_capacity(docs.len()),
            doc_topic: vec![vec![0; n_topics]; docs.len()],
            topic_word: vec![vec![0; n_words]; n_topics],
            topic_totals: vec![0; n_topics],
            docs,
            alpha,
            beta,
            n_words,
            probs: vec![0.0; n_topics],
        };
        for d in 0..state.docs.len() {
            let zs: Vec<usize> = state.docs[d]
                .iter()
                .map(|&w| {
                    let t = rng.random_range(0..n_topics);
                    state.doc_topic[d][t] += 1;
                    state.topic_word[t][w] += 1;
                    state.topic_totals[t] += 1;
                    t
                })
                .collect();
            state.z.push(zs);
        }
        state
    }

    fn sweep(&mut self, rng: &mut Rng) {
        let wb = self.n_words as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                self.doc_topic[d][old] -= 1;
                self.topic_word[old][w] -= 1;
                self.topic_totals[old] -= 1;
                let mut total = 0.0;
                for t in 0..self.probs.len() {
                    total += (f64::from(self.doc_topic[d][t]) + self.alpha)
                        * (f64::from(self.topic_word[t][w]) + self.beta)
                        / (f64::from(self.topic_totals[t]) + wb);
                    self.probs[t] = total;
                }
                let new = draw_cumulative(&self.probs, rng.random::<f64>() * total);
                self.z[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.topic_word[new][w] += 1;
                self.topic_totals[new] += 1;
            }
        }
    }
}

fn draw_cumulative(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

fn burn_in(iters: usize) -> usize {
    iters / 2
}

/// Fits the topic model. Empty documents are skipped and counted.
/// Counts after burn-in (half the sweeps) are averaged over every tenth
/// sweep; when that leaves nothing, the final sweep is used.
pub fn fit_lda(docs: &[Vec<usize>], n_words: usize, params: &LdaParams) -> Result<LdaFit> {
    if params.topics == 0 {
        return Err(Error::InvalidArgument("topic count must be positive".into()));
    }
    if !(params.alpha > 0.0 && params.beta > 0.0) {
        return Err(Error::InvalidArgument("alpha and beta must be positive".into()));
    }
    if let Some(&w) = docs.iter().flatten().find(|&&w| w >= n_words) {
        return Err(Error::InvalidArgument(format!("word id {w} outside vocabulary of {n_words}")));
    }
    let non_empty: Vec<&[usize]> = docs.iter().filter(|d| !d.is_empty()).map(Vec::as_slice).collect();
    let skipped = docs.len() - non_empty.len();
    if non_empty.is_empty() {
        return Err(Error::Sizing {
            what: "non-empty documents for LDA",
            needed: 1,
            got: 0,
        });
    }
    let mut rng = rng_from(params.seed);
    let mut state = GibbsState::new(non_empty, params.topics, n_words, params.alpha, params.beta, &mut rng);
    let burn = burn_in(params.iters);
    let mut acc = vec![vec![0.0; n_words]; params.topics];
    let mut samples = 0usize;
    for sweep in 1..=params.iters {
        state.sweep(&mut rng);
        if sweep > burn && (sweep - burn).is_multiple_of(10) {
            accumulate(&mut acc, &state.topic_word);
            samples += 1;
        }
    }
    if samples == 0 {
        accumulate(&mut acc, &state.topic_word);
        samples = 1;
    }
    let topic_word_counts: Vec<Vec<f64>> = acc
        .into_iter()
        .map(|row| row.into_iter().map(|c| c / samples as f64).collect())
        .collect();
    let topic_totals = topic_word_counts.iter().map(|r| r.iter().sum()).collect();
    Ok(LdaFit {
        model: LdaModel {
            n_topics: params.topics,
            n_words,
            alpha: params.alpha,
            beta: params.beta,
            topic_word_counts,
            topic_totals,
        },
        skipped_empty_docs: skipped,
    })
}

fn accumulate(acc: &mut [Vec<f64>], counts: &[Vec<u32>]) {
    for (a, c) in acc.iter_mut().zip(counts) {
        for (x, y) in a.iter_mut().zip(c) {
            *x += f64::from(*y);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub values: Vec<f64>,
    /// Set for empty documents, whose proportions are uniform.
    pub missing: bool,
}

/// Fold-in Gibbs sampling with the topic-word distribution held fixed.
/// `theta_t = (n_t + alpha) / (N + T * alpha)`, averaged over post-burn-in
/// sweeps.
pub fn infer_topics(model: &LdaModel, doc: &[usize], iters: usize, seed: u64) -> Result<ThetaVector> {
    let t_count = model.n_topics;
    if doc.is_empty() {
        return Ok(ThetaVector {
            values: vec![1.0 / t_count as f64; t_count],
            missing: true,
        });
    }
    if let Some(&w) = doc.iter().find(|&&w| w >= model.n_words) {
        return Err(Error::InvalidArgument(format!("word id {w} outside vocabulary of {}", model.n_words)));
    }
    let phi = model.topic_word_probs();
    let mut rng = rng_from(seed);
    let mut counts = vec![0u32; t_count];
    let mut z: Vec<usize> = doc
        .iter()
        .map(|_| {
            let t = rng.random_range(0..t_count);
            counts[t] += 1;
            t
        })
        .collect();
    let n = doc.len() as f64;
    let denom = n + t_count as f64 * model.alpha;
    let burn = burn_in(iters);
    let mut theta = vec![0.0; t_count];
    let mut samples = 0usize;
    let mut probs = vec![0.0; t_count];
    for sweep in 1..=iters.max(1) {
        for (i, &w) in doc.iter().enumerate() {
            counts[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..t_count {
                total += (f64::from(counts[t]) + model.alpha) * phi[t][w];
                probs[t] = total;
            }
            let new = draw_cumulative(&probs, rng.random::<f64>() * total);
            z[i] = new;
            counts[new] += 1;
        }
        if sweep > burn || iters <= 1 {
            for (th, c) in theta.iter_mut().zip(&counts) {
                *th += (f64::from(*c) + model.alpha) / denom;
            }
            samples += 1;
        }
    }
    theta.iter_mut().for_each(|v| *v /= samples as f64);
    Ok(ThetaVector {
        values: theta,
        missing: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two topics over disjoint halves of a 20-word vocabulary.
    fn corpus(docs_per_topic: usize, len: usize, seed: u64) -> Vec<(usize, Vec<usize>)> {
        let mut rng = rng_from(seed);
        let mut out = Vec::new();
        for i in 0..2 * docs_per_topic {
            let topic = i % 2;
            let words = (0..len).map(|_| topic * 10 + rng.random_range(0..10)).collect();
            out.push((topic, words));
        }
        out
    }

    fn params(topics: usize, seed: u64) -> LdaParams {
        LdaParams {
            topics,
            alpha: 0.1,
            beta: 0.01,
            iters: 200,
            seed,
        }
    }

    #[test]
    fn one_topic_gives_unit_theta() {
        let docs: Vec<Vec<usize>> = corpus(10, 20, 1).into_iter().map(|d| d.1).collect();
        let fit = fit_lda(&docs, 20, &LdaParams::with_topics(1, 3)).unwrap();
        let theta = infer_topics(&fit.model, &docs[0], 50, 4).unwrap();
        assert_eq!(theta.values, vec![1.0]);
    }

    #[test]
    fn recovers_disjoint_topics() {
        let data = corpus(100, 50, 7);
        let docs: Vec<Vec<usize>> = data.iter().map(|d| d.1.clone()).collect();
        let fit = fit_lda(&docs, 20, &params(2, 11)).unwrap();
        let phi = fit.model.topic_word_probs();
        let mass = |t: usize, set: usize| phi[t][set * 10..set * 10 + 10].iter().sum::<f64>();
        let straight = mass(0, 0).min(mass(1, 1));
        let swapped = mass(0, 1).min(mass(1, 0));
        assert!(straight.max(swapped) >= 0.9);

        // a doc made only of one topic's words
        let topic_of_set0 = if straight >= swapped { 0 } else { 1 };
        let theta = infer_topics(&fit.model, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1], 100, 5).unwrap();
        assert!(theta.values[topic_of_set0] >= 0.9);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let docs: Vec<Vec<usize>> = corpus(20, 30, 2).into_iter().map(|d| d.1).collect();
        let a = fit_lda(&docs, 20, &params(3, 9)).unwrap();
        let b = fit_lda(&docs, 20, &params(3, 9)).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn counts_stay_consistent_each_sweep() {
        let docs: Vec<Vec<usize>> = corpus(15, 25, 3).into_iter().map(|d| d.1).collect();
        let mut freq = [0u32; 20];
        for w in docs.iter().flatten() {
            freq[*w] += 1;
        }
        let mut rng = rng_from(1);
        let refs: Vec<&[usize]> = docs.iter().map(Vec::as_slice).collect();
        let mut state = GibbsState::new(refs, 4, 20, 0.5, 0.01, &mut rng);
        for _ in 0..20 {
            state.sweep(&mut rng);
            for w in 0..20 {
                let col: u32 = state.topic_word.iter().map(|row| row[w]).sum();
                assert_eq!(col, freq[w]);
            }
        }
    }

    #[test]
    fn empty_docs() {
        let mut docs: Vec<Vec<usize>> = corpus(5, 10, 4).into_iter().map(|d| d.1).collect();
        docs.push(Vec::new());
        let fit = fit_lda(&docs, 20, &params(3, 1)).unwrap();
        assert_eq!(fit.skipped_empty_docs, 1);
        let theta = infer_topics(&fit.model, &[], 10, 0).unwrap();
        assert!(theta.missing);
        assert_eq!(theta.values, vec![1.0 / 3.0; 3]);
        assert!(fit_lda(&[Vec::new()], 20, &params(2, 0)).is_err());
    }

    #[test]
    fn theta_sums_to_one() {
        let docs: Vec<Vec<usize>> = corpus(10, 20, 5).into_iter().map(|d| d.1).collect();
        let fit = fit_lda(&docs, 20, &LdaParams { iters: 50, ..LdaParams::with_topics(6, 2) }).unwrap();
        let mut rng = rng_from(8);
        for i in 0..1000 {
            let len = rng.random_range(1..40);
            let doc: Vec<usize> = (0..len).map(|_| rng.random_range(0..20)).collect();
            let theta = infer_topics(&fit.model, &doc, 20, i).unwrap();
            assert!((theta.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(theta.values.iter().all(|v| *v >= 0.0));
        }
    }
}
