//! Multiple-component, multiple-instance boosting. Each component has an
//! additive ensemble of CART trees whose logistic output is an instance
//! probability; instances combine by noise-or within a component and
//! components combine by noise-or within a bag.

use serde::{Deserialize, Serialize};

use crate::cart::{fit_weak, Tree};
use crate::error::{Error, Result};

/// Clamp applied wherever a probability enters a quotient or a log.
pub const PROB_EPS: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn logistic(h: f64) -> f64 {
    if h >= 0.0 {
        1.0 / (1.0 + (-h).exp())
    } else {
        let e = h.exp();
        e / (1.0 + e)
    }
}

/// Noise-or: `1 - prod(1 - p)`; zero for no inputs.
pub fn noise_or(probs: impl IntoIterator<Item = f64>) -> f64 {
    1.0 - probs.into_iter().map(|p| 1.0 - p).product::<f64>()
}

/// A bag as the trainer sees it: per component, a list of feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilBag {
    pub components: Vec<Vec<Vec<f64>>>,
}

impl MilBag {
    pub fn instance_count(&self) -> usize {
        self.components.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightRule {
    /// Full chain-rule derivative of the bag log-likelihood.
    #[default]
    Exact,
    /// `(y - P) / P * p_t`, kept for comparison.
    Simplified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTree {
    pub alpha: f64,
    pub tree: Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub trees: Vec<WeightedTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostOptions {
    pub rounds: usize,
    pub max_depth: usize,
    pub alpha_max: f64,
    pub seed: u64,
    pub weight_rule: WeightRule,
}

impl Default for BoostOptions {
    fn default() -> Self {
        Self {
            rounds: 50,
            max_depth: 3,
            alpha_max: 10.0,
            seed: 0,
            weight_rule: WeightRule::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMilModel {
    pub components: Vec<Component>,
    pub options: BoostOptions,
    pub eps: f64,
}

impl McMilModel {
    pub fn empty(names: &[&str], options: BoostOptions) -> Self {
        Self {
            components: names
                .iter()
                .map(|n| Component {
                    name: (*n).to_string(),
                    trees: Vec::new(),
                })
                .collect(),
            options,
            eps: PROB_EPS,
        }
    }

    /// Additive score `H^k(x)`.
    pub fn h(&self, k: usize, x: &[f64]) -> f64 {
        self.components[k].trees.iter().map(|t| t.alpha * t.tree.predict(x)).sum()
    }

    pub fn instance_prob(&self, k: usize, x: &[f64]) -> f64 {
        clamp_prob(logistic(self.h(k, x)))
    }

    pub fn component_prob(&self, k: usize, instances: &[Vec<f64>]) -> f64 {
        noise_or(instances.iter().map(|x| self.instance_prob(k, x)))
    }

    /// Clamped bag probability; missing components contribute nothing.
    pub fn bag_prob(&self, bag: &MilBag) -> f64 {
        clamp_prob(noise_or(
            bag.components
                .iter()
                .enumerate()
                .map(|(k, inst)| self.component_prob(k, inst)),
        ))
    }

    pub fn score(&self, bag: &MilBag) -> f64 {
        self.bag_prob(bag)
    }
}

/// Instance scores `H^k` cached per bag, component and instance.
pub type Scores = Vec<Vec<Vec<f64>>>;

pub fn instance_scores(model: &McMilModel, bags: &[MilBag]) -> Scores {
    bags.iter()
        .map(|b| {
            b.components
                .iter()
                .enumerate()
                .map(|(k, inst)| inst.iter().map(|x| model.h(k, x)).collect())
                .collect()
        })
        .collect()
}

/// `1 - clamp(logistic(h))`, computed without cancellation.
fn keep_prob(h: f64) -> f64 {
    clamp_prob(logistic(-h))
}

/// Clamped bag probability and its complement. Both come from the log of
/// the product of instance complements, so neither loses digits near 0 or 1.
fn bag_prob_from_scores(scores: &[Vec<f64>]) -> (f64, f64) {
    let log_keep: f64 = scores.iter().flatten().map(|&h| keep_prob(h).ln()).sum();
    (clamp_prob(-log_keep.exp_m1()), clamp_prob(log_keep.exp()))
}

fn bag_log_lik((p, q): (f64, f64), y: u8) -> f64 {
    if y == 1 {
        p.ln()
    } else {
        q.ln()
    }
}

/// Total log-likelihood of labeled bags given cached scores.
pub fn log_likelihood_from_scores(scores: &Scores, labels: &[u8]) -> f64 {
    scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| bag_log_lik(bag_prob_from_scores(s), y))
        .sum()
}

pub fn log_likelihood(model: &McMilModel, bags: &[MilBag], labels: &[u8]) -> f64 {
    log_likelihood_from_scores(&instance_scores(model, bags), labels)
}

/// `prod_{j != i} v_j` for every `i`, without division.
fn products_excluding_each(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![1.0; n];
    let mut acc = 1.0;
    for i in 0..n {
        out[i] = acc;
        acc *= v[i];
    }
    acc = 1.0;
    for i in (0..n).rev() {
        out[i] *= acc;
        acc *= v[i];
    }
    out
}

/// Derivative of the bag log-likelihood with respect to `H^k` at every
/// instance of component `k`, per bag.
pub fn instance_weights_from_scores(scores: &Scores, labels: &[u8], k: usize, rule: WeightRule) -> Vec<Vec<f64>> {
    scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| {
            let y = f64::from(y);
            let inst: Vec<f64> = s[k].iter().map(|&h| clamp_prob(logistic(h))).collect();
            let (p_bag, q_bag) = bag_prob_from_scores(s);
            match rule {
                WeightRule::Exact => {
                    let d_bag = y / p_bag - (1.0 - y) / q_bag;
                    let comp_keep: Vec<f64> = s.iter().map(|hs| hs.iter().map(|&h| keep_prob(h)).product()).collect();
                    let other_comps = products_excluding_each(&comp_keep)[k];
                    let inst_keep: Vec<f64> = s[k].iter().map(|&h| keep_prob(h)).collect();
                    let other_inst = products_excluding_each(&inst_keep);
                    inst.iter()
                        .zip(&inst_keep)
                        .zip(&other_inst)
                        .map(|((p, keep), rest)| d_bag * other_comps * rest * p * keep)
                        .collect()
                }
                WeightRule::Simplified => inst.iter().map(|p| (y - p_bag) / p_bag * p).collect(),
            }
        })
        .collect()
}

pub fn instance_weights(model: &McMilModel, bags: &[MilBag], labels: &[u8], k: usize, rule: WeightRule) -> Vec<Vec<f64>> {
    instance_weights_from_scores(&instance_scores(model, bags), labels, k, rule)
}

const GOLDEN_TOL: f64 = 1e-4;

/// Maximizes `f` over `[0, hi]` by golden-section search, then keeps the
/// best of `{0, found, hi}`, preferring the smaller step on ties.
pub fn golden_section_max(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = ((a + b) / 2.0).clamp(0.0, hi);
    let mut best = (0.0, f(0.0));
    for cand in [mid, hi] {
        let v = f(cand);
        if v > best.1 {
            best = (cand, v);
        }
    }
    best.0
}

/// Step size for adding `tree` to component `k`; 0 when no positive step helps.
pub fn line_search_alpha_from_scores(
    scores: &Scores,
    bags: &[MilBag],
    labels: &[u8],
    k: usize,
    tree: &Tree,
    alpha_max: f64,
) -> f64 {
    let h: Vec<Vec<f64>> = bags
        .iter()
        .map(|b| b.components[k].iter().map(|x| tree.predict(x)).collect())
        .collect();
    let eval = |alpha: f64| -> f64 {
        scores
            .iter()
            .zip(&h)
            .zip(labels)
            .map(|((s, hk), &y)| {
                let mut shifted = s.clone();
                for (v, d) in shifted[k].iter_mut().zip(hk) {
                    *v += alpha * d;
                }
                bag_log_lik(bag_prob_from_scores(&shifted), y)
            })
            .sum()
    };
    golden_section_max(eval, alpha_max)
}

pub fn line_search_alpha(model: &McMilModel, k: usize, tree: &Tree, bags: &[MilBag], labels: &[u8], alpha_max: f64) -> f64 {
    line_search_alpha_from_scores(&instance_scores(model, bags), bags, labels, k, tree, alpha_max)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: McMilModel,
    /// Training log-likelihood before the first round and after each round.
    pub log_likelihoods: Vec<f64>,
}

fn check_labels(bags: usize, labels: &[u8]) -> Result<()> {
    if bags != labels.len() {
        return Err(Error::InvalidArgument(format!("{bags} bags but {} labels", labels.len())));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::InvalidArgument("training needs both classes".into()));
    }
    Ok(())
}

/// Boosts every component round-robin: per round and component, fit a tree
/// to the instance weights and add it with a line-searched coefficient.
pub fn train(bags: &[MilBag], labels: &[u8], names: &[&str], opts: &BoostOptions) -> Result<TrainOutcome> {
    check_labels(bags.len(), labels)?;
    if let Some(b) = bags.iter().find(|b| b.components.len() != names.len()) {
        return Err(Error::InvalidArgument(format!(
            "bag has {} components, expected {}",
            b.components.len(),
            names.len()
        )));
    }
    let mut model = McMilModel::empty(names, opts.clone());
    let mut scores = instance_scores(&model, bags);
    let mut history = vec![log_likelihood_from_scores(&scores, labels)];
    for _ in 0..opts.rounds {
        let mut changed = false;
        for k in 0..names.len() {
            let weights = instance_weights_from_scores(&scores, labels, k, opts.weight_rule);
            let x: Vec<&[f64]> = bags.iter().flat_map(|b| b.components[k].iter().map(Vec::as_slice)).collect();
            let w: Vec<f64> = weights.into_iter().flatten().collect();
            let Some(tree) = fit_weak(&x, &w, opts.max_depth) else {
                continue;
            };
            let alpha = line_search_alpha_from_scores(&scores, bags, labels, k, &tree, opts.alpha_max);
            if alpha <= 0.0 {
                continue;
            }
            for (s, b) in scores.iter_mut().zip(bags) {
                for (v, x) in s[k].iter_mut().zip(&b.components[k]) {
                    *v += alpha * tree.predict(x);
                }
            }
            model.components[k].trees.push(WeightedTree { alpha, tree });
            changed = true;
        }
        history.push(log_likelihood_from_scores(&scores, labels));
        if !changed {
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        log_likelihoods: history,
    })
}

pub const MODEL_KIND: &str = "mcmil";
