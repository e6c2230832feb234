//! Shallow CART classifiers on signed instance weights: each tree predicts
//! `sign(w)` with sample weight `|w|`, splitting by weighted Gini impurity.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        sign: i8,
    },
}

/// Arena-stored tree; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn constant(sign: i8) -> Self {
        Self {
            nodes: vec![Node::Leaf { sign }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { sign } => return f64::from(sign),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Mass {
    pos: f64,
    neg: f64,
}

impl Mass {
    fn add(&mut self, w: f64) {
        if w > 0.0 {
            self.pos += w;
        } else {
            self.neg -= w;
        }
    }

    fn sub(&mut self, w: f64) {
        if w > 0.0 {
            self.pos -= w;
        } else {
            self.neg += w;
        }
    }

    fn total(&self) -> f64 {
        self.pos + self.neg
    }

    /// Gini impurity times node mass.
    fn weighted_gini(&self) -> f64 {
        let t = self.total();
        if t <= 0.0 {
            0.0
        } else {
            2.0 * self.pos * self.neg / t
        }
    }

    fn sign(&self) -> i8 {
        if self.pos >= self.neg {
            1
        } else {
            -1
        }
    }
}

struct Builder<'a> {
    x: &'a [&'a [f64]],
    w: &'a [f64],
    max_depth: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn mass(&self, idx: &[usize]) -> Mass {
        let mut m = Mass::default();
        for &i in idx {
            m.add(self.w[i]);
        }
        m
    }

    fn best_split(&self, idx: &[usize], parent: Mass) -> Option<(usize, f64, f64)> {
        let dim = self.x[idx[0]].len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..dim {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = Mass::default();
            let mut right = parent;
            for pair in order.windows(2) {
                let w = self.w[pair[0]];
                left.add(w);
                right.sub(w);
                let (lo, hi) = (self.x[pair[0]][f], self.x[pair[1]][f]);
                if lo == hi {
                    continue;
                }
                let impurity = left.weighted_gini() + right.weighted_gini().max(0.0);
                if best.is_none_or(|b| impurity < b.2) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some((f, if mid < hi { mid } else { lo }, impurity));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        let mass = self.mass(&idx);
        self.nodes.push(Node::Leaf { sign: mass.sign() });
        let parent_gini = mass.weighted_gini();
        if depth >= self.max_depth || idx.len() < 2 || parent_gini <= 0.0 {
            return at;
        }
        let Some((feature, threshold, impurity)) = self.best_split(&idx, mass) else {
            return at;
        };
        if impurity >= parent_gini * (1.0 - 1e-12) {
            return at;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Fits a tree of depth at most `max_depth`; `None` when every weight is zero.
pub fn fit_weak(x: &[&[f64]], w: &[f64], max_depth: usize) -> Option<Tree> {
    assert_eq!(x.len(), w.len(), "one weight per instance");
    let idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] != 0.0 && w[i].is_finite()).collect();
    if idx.is_empty() {
        return None;
    }
    let mut b = Builder {
        x,
        w,
        max_depth,
        nodes: Vec::new(),
    };
    b.grow(idx, 0);
    Some(Tree { nodes: b.nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weighted_accuracy(t: &Tree, x: &[&[f64]], w: &[f64]) -> f64 {
        let total: f64 = w.iter().map(|v| v.abs()).sum();
        let hit: f64 = x
            .iter()
            .zip(w)
            .filter(|(xi, wi)| t.predict(xi) * wi.signum() > 0.0)
            .map(|(_, wi)| wi.abs())
            .sum();
        hit / total
    }

    #[test]
    fn separable_signs_need_one_split() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![0.3, i as f64]).collect();
        let x: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let w: Vec<f64> = (0..10).map(|i| if i < 4 { -0.5 } else { 1.0 + i as f64 }).collect();
        let t = fit_weak(&x, &w, 3).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(weighted_accuracy(&t, &x, &w), 1.0);
        assert_eq!(t.predict(&[0.0, 3.0]), -1.0);
        assert_eq!(t.predict(&[0.0, 4.0]), 1.0);
    }

    #[test]
    fn all_positive_is_constant() {
        let rows = [vec![1.0, 2.0], vec![3.0, 1.0]];
        let x: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        assert_eq!(fit_weak(&x, &[0.5, 2.0], 3).unwrap(), Tree::constant(1));
        assert_eq!(fit_weak(&x[..1], &[0.1], 3).unwrap(), Tree::constant(1));
        assert!(fit_weak(&x, &[0.0, 0.0], 3).is_none());
    }

    #[test]
    fn balanced_leaf_ties_to_plus() {
        let rows = [vec![1.0], vec![1.0]];
        let x: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        assert_eq!(fit_weak(&x, &[1.0, -1.0], 3).unwrap(), Tree::constant(1));
    }

    #[test]
    fn flipping_weights_flips_leaves() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, (i * 5 % 11) as f64]).collect();
        let x: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let w: Vec<f64> = (0..40).map(|i| ((i * 37 % 17) as f64 - 8.3) / 3.0).collect();
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        let a = fit_weak(&x, &w, 3).unwrap();
        let b = fit_weak(&x, &neg, 3).unwrap();
        assert!(a.depth() <= 3);
        assert_eq!(a.nodes.len(), b.nodes.len());
        for (na, nb) in a.nodes.iter().zip(&b.nodes) {
            match (na, nb) {
                (Node::Leaf { sign: sa }, Node::Leaf { sign: sb }) => assert_eq!(*sa, -*sb),
                (sa, sb) => assert_eq!(sa, sb),
            }
        }
    }
}
