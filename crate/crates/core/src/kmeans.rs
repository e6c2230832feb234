//! Lloyd's k-means with k-means++ seeding.

use rand::Rng as _;

use crate::rng::rng_from;

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, the rest by squared-distance sampling.
pub fn kmeans_pp_seeds(data: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = Some(i);
                    break;
                }
                target -= w;
            }
            // rounding can exhaust the scan; fall back to the last eligible point
            chosen.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).unwrap_or(n - 1))
        } else {
            rng.random_range(0..n)
        };
        let c = data[idx].clone();
        for (dd, x) in d2.iter_mut().zip(data) {
            *dd = dd.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub sse_history: Vec<f64>,
}

/// Nearest center, lowest index on ties.
pub fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Runs Lloyd iterations until assignments stop changing or `max_iters` is
/// reached. Clusters that empty out are re-seeded from the points farthest
/// from their current centers.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> KMeansFit {
    let dim = data[0].len();
    let mut centers = kmeans_pp_seeds(data, k, seed);
    let mut assignments = vec![usize::MAX; data.len()];
    let mut sse_history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut dists = Vec::with_capacity(data.len());
        for (a, x) in assignments.iter_mut().zip(data) {
            let (c, d) = nearest(&centers, x);
            if *a != c {
                *a = c;
                changed = true;
            }
            dists.push(d);
        }
        sse_history.push(dists.iter().sum());
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut far: Vec<usize> = (0..data.len()).collect();
        far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
        let mut far = far.into_iter();
        for c in 0..k {
            if counts[c] == 0 {
                if let Some(i) = far.next() {
                    centers[c] = data[i].clone();
                    // the donor point now sits on its own center
                    assignments[i] = c;
                }
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    KMeansFit {
        centers,
        assignments,
        sse_history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn sse_never_increases() {
        let mut rng = rng_from(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<Vec<f64>> = (0..500)
            .map(|i| {
                let off = (i % 5) as f64 * 3.0;
                vec![off + noise.sample(&mut rng), noise.sample(&mut rng), off - noise.sample(&mut rng)]
            })
            .collect();
        let fit = kmeans(&data, 7, 5, 300);
        assert!(fit.sse_history.len() > 1);
        for w in fit.sse_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn seeds_are_distinct_points() {
        let data: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 3) as f64]).collect();
        let mut seeds = kmeans_pp_seeds(&data, 3, 9);
        seeds.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(seeds, vec![vec![0.0], vec![1.0], vec![2.0]]);
    }
}
