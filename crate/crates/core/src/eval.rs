//! Ranking metrics over scored taxis and the ranked suspect list.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTaxi {
    pub taxi_id: String,
    pub score: f64,
    pub label: Option<u8>,
}

fn by_rank(a: &ScoredTaxi, b: &ScoredTaxi) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.taxi_id.cmp(&b.taxi_id))
}

/// Descending score, ties by taxi id.
pub fn rank_suspects(scored: &[ScoredTaxi]) -> Vec<ScoredTaxi> {
    let mut out = scored.to_vec();
    out.sort_by(by_rank);
    out
}

fn labeled(scored: &[ScoredTaxi]) -> Result<Vec<(&ScoredTaxi, bool)>> {
    scored
        .iter()
        .map(|s| match s.label {
            Some(y) => Ok((s, y == 1)),
            None => Err(Error::InvalidArgument(format!("taxi {} has no label", s.taxi_id))),
        })
        .collect()
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, from average ranks.
pub fn roc_auc(scored: &[ScoredTaxi]) -> Result<f64> {
    let mut items = labeled(scored)?;
    let n_pos = items.iter().filter(|(_, y)| *y).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("roc_auc needs both classes"));
    }
    items.sort_by(|a, b| a.0.score.total_cmp(&b.0.score));
    // sum of 1-based average ranks of positives, doubled to stay integral
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0.score == items[i].0.score {
            j += 1;
        }
        let pos_in_tie = items[i..j].iter().filter(|(_, y)| *y).count() as u128;
        // ranks i+1..=j average to (i + 1 + j) / 2
        rank_sum2 += pos_in_tie * (i as u128 + 1 + j as u128);
        i = j;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // U = rank_sum - p(p+1)/2, doubled
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Step-interpolated average precision over the ranked list.
pub fn average_precision(scored: &[ScoredTaxi]) -> Result<f64> {
    let mut items = labeled(scored)?;
    let n_pos = items.iter().filter(|(_, y)| *y).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("average_precision needs a positive"));
    }
    items.sort_by(|a, b| by_rank(a.0, b.0));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (n, (_, y)) in items.iter().enumerate() {
        if *y {
            hits += 1;
            sum += hits as f64 / (n + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub auc: f64,
    pub ap: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn evaluate(scored: &[ScoredTaxi]) -> Result<Metrics> {
    let n_pos = labeled(scored)?.iter().filter(|(_, y)| *y).count();
    Ok(Metrics {
        auc: roc_auc(scored)?,
        ap: average_precision(scored)?,
        n_pos,
        n_neg: scored.len() - n_pos,
    })
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "auc={:.6} ap={:.6} n_pos={} n_neg={}", self.auc, self.ap, self.n_pos, self.n_neg)
    }
}

pub fn write_ranked_csv<W: Write>(out: W, ranked: &[ScoredTaxi]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "taxi_id", "score"])?;
    for (i, s) in ranked.iter().enumerate() {
        w.write_record([(i + 1).to_string(), s.taxi_id.clone(), s.score.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<ranked csv>", e))?;
    Ok(())
}
