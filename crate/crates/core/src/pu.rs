//! Pick-up words: a k-means vocabulary over standardized
//! `(time of day, lon, lat)` and kernel-smoothed word membership.

use chrono::NaiveDate;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{meters_per_degree_lat, meters_per_degree_lon};
use crate::ingest::TaxiId;
use crate::kmeans::{kmeans, sq_dist};
use crate::rng::Rng;
use crate::stl::StandardizationStats;

pub const KMEANS_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuPoint {
    /// Minutes since local midnight, in `[0, 1440)`.
    pub t_pu: f64,
    pub lon: f64,
    pub lat: f64,
}

impl PuPoint {
    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.t_pu, self.lon, self.lat]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Word centers in standardized space.
    pub centers: Vec<Vec<f64>>,
    pub stats: StandardizationStats,
}

pub const VOCAB_KIND: &str = "vocabulary";

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn standardize(&self, p: &PuPoint) -> Vec<f64> {
        self.stats.apply(&p.as_vec())
    }

    /// Squared-distance kernel scale for a spatial uncertainty radius,
    /// expressed in standardized units (average of the lon and lat axes).
    pub fn delta_for_meters(&self, meters: f64) -> f64 {
        let lat0 = self.stats.mean[2];
        let lon_units = meters / meters_per_degree_lon(lat0) / self.stats.std[1];
        let lat_units = meters / meters_per_degree_lat() / self.stats.std[2];
        0.5 * (lon_units * lon_units + lat_units * lat_units)
    }
}

#[derive(Debug, Clone)]
pub struct VocabularyFit {
    pub vocab: Vocabulary,
    pub sse_history: Vec<f64>,
}

/// Clusters pick-up points into `w` words. Needs at least `10 * w` points.
pub fn build_vocabulary(points: &[PuPoint], w: usize, seed: u64) -> Result<VocabularyFit> {
    if w == 0 {
        return Err(Error::InvalidArgument("vocabulary size must be positive".into()));
    }
    if points.len() < 10 * w {
        return Err(Error::Sizing {
            what: "pick-up points for vocabulary",
            needed: 10 * w,
            got: points.len(),
        });
    }
    let raw: Vec<Vec<f64>> = points.iter().map(PuPoint::as_vec).collect();
    let stats = StandardizationStats::fit(&raw);
    let data: Vec<Vec<f64>> = raw.iter().map(|r| stats.apply(r)).collect();
    let fit = kmeans(&data, w, seed, KMEANS_MAX_ITERS);
    Ok(VocabularyFit {
        vocab: Vocabulary {
            centers: fit.centers,
            stats,
        },
        sse_history: fit.sse_history,
    })
}

/// Soft membership of a point over its two nearest words; the weights sum
/// to one. A one-word vocabulary yields a single word with weight one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub word_a: usize,
    pub o_a: f64,
    pub second: Option<(usize, f64)>,
}

/// Gaussian-kernel (Nadaraya-Watson) weights over the two nearest words of
/// a standardized point.
pub fn soft_word_membership(z: &[f64], vocab: &Vocabulary, delta: f64) -> Result<Membership> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let mut best = (usize::MAX, f64::INFINITY);
    let mut next = (usize::MAX, f64::INFINITY);
    for (i, c) in vocab.centers.iter().enumerate() {
        let d = sq_dist(z, c);
        if d < best.1 {
            next = best;
            best = (i, d);
        } else if d < next.1 {
            next = (i, d);
        }
    }
    if next.0 == usize::MAX {
        return Ok(Membership {
            word_a: best.0,
            o_a: 1.0,
            second: None,
        });
    }
    // exp(-a/δ) / (exp(-a/δ) + exp(-b/δ)) written to avoid underflow
    let o_a = 1.0 / (1.0 + ((best.1 - next.1) / delta).exp());
    Ok(Membership {
        word_a: best.0,
        o_a,
        second: Some((next.0, 1.0 - o_a)),
    })
}

impl Membership {
    /// Draws one token: `word_a` with probability `o_a`, else the runner-up.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        match self.second {
            Some((b, _)) if rng.random::<f64>() >= self.o_a => b,
            _ => self.word_a,
        }
    }
}

/// One taxi-day of pick-up words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuDoc {
    pub taxi_id: TaxiId,
    pub local_date: NaiveDate,
    pub word_ids: Vec<usize>,
}

/// Turns a day's pick-ups into word tokens, one sampled token per pick-up.
pub fn tokenize(points: &[PuPoint], vocab: &Vocabulary, delta: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    points
        .iter()
        .map(|p| Ok(soft_word_membership(&vocab.standardize(p), vocab, delta)?.sample(rng)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn vocab(centers: Vec<Vec<f64>>) -> Vocabulary {
        Vocabulary {
            centers,
            stats: StandardizationStats {
                mean: vec![0.0; 3],
                std: vec![1.0; 3],
            },
        }
    }

    #[test]
    fn coincident_groups_become_words() {
        let a = PuPoint { t_pu: 480.0, lon: 116.30, lat: 39.90 };
        let b = PuPoint { t_pu: 1080.0, lon: 116.50, lat: 40.00 };
        let pts: Vec<PuPoint> = (0..20).map(|i| if i % 2 == 0 { a } else { b }).collect();
        let fit = build_vocabulary(&pts, 2, 4).unwrap();
        let mut words: Vec<Vec<f64>> = fit.vocab.centers.iter().map(|c| fit.vocab.stats.invert(c)).collect();
        words.sort_by(|x, y| x[0].total_cmp(&y[0]));
        for (w, p) in words.iter().zip([a, b]) {
            for (got, want) in w.iter().zip(p.as_vec()) {
                assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn single_word_is_the_mean() {
        let pts: Vec<PuPoint> = (0..10)
            .map(|i| PuPoint { t_pu: 60.0 * i as f64, lon: 116.0 + 0.01 * i as f64, lat: 39.9 })
            .collect();
        let fit = build_vocabulary(&pts, 1, 0).unwrap();
        for v in &fit.vocab.centers[0] {
            assert!(v.abs() < 1e-9);
        }
        assert!(matches!(build_vocabulary(&pts, 2, 0), Err(Error::Sizing { .. })));
    }

    #[test]
    fn membership_examples() {
        let v = vocab(vec![vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]);
        let m = soft_word_membership(&[1.0, 0.0, 0.0], &v, 0.5).unwrap();
        assert_eq!(m.o_a, 0.5);
        assert_eq!(m.o_a + m.second.unwrap().1, 1.0);

        // d_a^2 = 0, d_b^2 / delta = ln 3
        let delta = 4.0 / 3f64.ln();
        let m = soft_word_membership(&[0.0, 0.0, 0.0], &v, delta).unwrap();
        assert_eq!(m.word_a, 0);
        assert!((m.o_a - 0.75).abs() < 1e-15);

        let far = vocab(vec![vec![0.0, 0.0, 0.0], vec![1e6, 0.0, 0.0]]);
        let m = soft_word_membership(&[0.0, 0.0, 0.0], &far, 1.0).unwrap();
        assert_eq!(m.o_a, 1.0);

        let one = vocab(vec![vec![0.0, 0.0, 0.0]]);
        let m = soft_word_membership(&[5.0, 1.0, 1.0], &one, 1.0).unwrap();
        assert_eq!((m.word_a, m.o_a, m.second), (0, 1.0, None));

        assert!(soft_word_membership(&[0.0; 3], &v, 0.0).is_err());
    }

    #[test]
    fn sampling_follows_membership() {
        let v = vocab(vec![vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]);
        let m = soft_word_membership(&[0.0, 0.0, 0.0], &v, 4.0 / 3f64.ln()).unwrap();
        let mut rng = rng_from(1);
        let hits = (0..20_000).filter(|_| m.sample(&mut rng) == 0).count();
        assert!((hits as f64 / 20_000.0 - 0.75).abs() < 0.01);
    }
}
