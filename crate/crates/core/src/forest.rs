//! Random-forest regressor (CART, squared-error splits) with impurity-based
//! feature importances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    /// `None` uses `floor(sqrt(n_features))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
    importances: Vec<f64>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
    n_features: usize,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    max_features: usize,
    max_depth: Option<usize>,
    total_weight: f64,
    nodes: Vec<Node>,
    importances: Vec<f64>,
}

/// Sum, sum of squares and count over a sample multiset.
fn moments(y: &[f64], samples: &[usize]) -> (f64, f64, f64) {
    samples.iter().fold((0.0, 0.0, 0.0), |(s, q, n), &i| (s + y[i], q + y[i] * y[i], n + 1.0))
}

fn sse(sum: f64, sq: f64, n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        (sq - sum * sum / n).max(0.0)
    }
}

impl Builder<'_> {
    fn grow(&mut self, samples: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let (sum, sq, n) = moments(self.y, samples);
        self.nodes.push(Node::Leaf(sum / n));
        let node_sse = sse(sum, sq, n);
        if samples.len() < 2 || node_sse <= 1e-12 * n.max(1.0) || self.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }

        let n_features = self.x[0].len();
        let mut order: Vec<usize> = (0..n_features).collect();
        order.shuffle(rng);

        // (decrease in SSE, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
        for &f in &order {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            scratch.clear();
            scratch.extend(samples.iter().map(|&i| (self.x[i][f], self.y[i])));
            scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            if scratch[0].0 == scratch[scratch.len() - 1].0 {
                continue;
            }
            visited += 1;
            let (mut ls, mut lq, mut ln) = (0.0, 0.0, 0.0);
            for k in 0..scratch.len() - 1 {
                let (xv, yv) = scratch[k];
                ls += yv;
                lq += yv * yv;
                ln += 1.0;
                let next = scratch[k + 1].0;
                if next == xv {
                    continue;
                }
                let child = sse(ls, lq, ln) + sse(sum - ls, sq - lq, n - ln);
                let gain = node_sse - child;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (xv + next)));
                }
            }
        }

        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        self.importances[feature] += gain / self.total_weight;

        let mut split = 0;
        for k in 0..samples.len() {
            if self.x[samples[k]][feature] <= threshold {
                samples.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = samples.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl RandomForest {
    /// Fits on rows `x` (all the same width) and targets `y`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], config: &ForestConfig) -> Self {
        assert_eq!(x.len(), y.len(), "row/target count mismatch");
        assert!(!x.is_empty(), "empty training set");
        let n_features = x[0].len();
        let max_features = config
            .max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1));

        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(t as u64);
                let mut samples: Vec<usize> = if config.bootstrap {
                    (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
                } else {
                    (0..x.len()).collect()
                };
                let mut b = Builder {
                    x,
                    y,
                    max_features,
                    max_depth: config.max_depth,
                    total_weight: samples.len() as f64,
                    nodes: Vec::new(),
                    importances: vec![0.0; n_features],
                };
                b.grow(&mut samples, 0, &mut rng);
                Tree {
                    nodes: b.nodes,
                    importances: b.importances,
                }
            })
            .collect();
        Self { trees, n_features }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean of per-tree normalized importances, renormalized to sum 1.
    /// All zeros when no tree ever split.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        let mut used = 0usize;
        for t in &self.trees {
            let total: f64 = t.importances.iter().sum();
            if t.nodes.len() > 1 && total > 0.0 {
                used += 1;
                for (a, v) in acc.iter_mut().zip(&t.importances) {
                    *a += v / total;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        if used == 0 || total <= 0.0 {
            return vec![0.0; self.n_features];
        }
        acc.iter().map(|v| v / total).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_a_step_function() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64, (i / 2 % 2) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 10.0 * r[0]).collect();
        let rf = RandomForest::fit(&x, &y, &ForestConfig { n_trees: 20, ..Default::default() });
        assert!((rf.predict(&[1.0, 0.0]) - 10.0).abs() < 1e-9);
        assert!(rf.predict(&[0.0, 1.0]).abs() < 1e-9);
        let imp = rf.feature_importances();
        assert!(imp[0] > 0.99, "{imp:?}");
    }

    #[test]
    fn deterministic_for_seed() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 3) as f64, (i % 5) as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 + r[1] - r[2] * 0.5).collect();
        let cfg = ForestConfig { n_trees: 16, seed: 9, ..Default::default() };
        let a = RandomForest::fit(&x, &y, &cfg).feature_importances();
        let b = RandomForest::fit(&x, &y, &cfg).feature_importances();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_target_has_zero_importance() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![(i % 2) as f64]).collect();
        let rf = RandomForest::fit(&x, &[3.0; 10], &ForestConfig::default());
        assert_eq!(rf.feature_importances(), vec![0.0]);
    }
}
