//! Bagged CART regression forest.
//!
//! Trees are grown on bootstrap resamples with variance-reduction splits over
//! a random feature subset at every node. Each tree draws from its own
//! generator seeded from the forest seed and its index, so fitting in
//! parallel yields the same forest as fitting sequentially.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RegressorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features tried per node; `None` means `sqrt(d) / d`.
    pub feature_fraction: Option<f64>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 300,
            max_depth: 12,
            min_leaf: 2,
            feature_fraction: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn features_per_node(&self, d: usize) -> usize {
        let frac = self.feature_fraction.unwrap_or_else(|| (d as f64).sqrt() / d as f64);
        ((frac * d as f64).round() as usize).clamp(1, d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root. `x[feature] <= threshold` goes left.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, count } => Some((*value, *count)),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub n_features: usize,
    pub seed: u64,
    pub feature_fraction: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

/// Mean anchored at the first value, exact for constant inputs.
pub(crate) fn anchored_mean(v: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let mut acc = 0.0;
    let mut n = 0usize;
    for x in v {
        let f = *first.get_or_insert(x);
        acc += x - f;
        n += 1;
    }
    first.map_or(f64::NAN, |f| f + acc / n as f64)
}

fn tree_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = anchored_mean(idx.iter().map(|&i| self.y[i]));
        self.nodes.push(Node::Leaf {
            value,
            count: idx.len(),
        });
        self.nodes.len() - 1
    }

    /// Best `(feature, threshold, left_count)` by SSE reduction.
    fn best_split(&self, idx: &mut [usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in sample(rng, d, self.mtry).into_iter() {
            idx.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[idx[k]];
                let nl = k + 1;
                let nr = n - nl;
                let (lo, hi) = (self.x[idx[k]][feature], self.x[idx[k + 1]][feature]);
                if nl < self.cfg.min_leaf || nr < self.cfg.min_leaf || lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - base;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.filter(|(g, _, _)| *g > 1e-12 * (1.0 + base.abs()))
            .map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let first = self.y[idx[0]];
        let constant = idx.iter().all(|&i| self.y[i] == first);
        if depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_leaf || constant {
            return self.leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx, rng) else {
            return self.leaf(idx);
        };
        idx.sort_by_key(|&i| self.x[i][feature] > threshold);
        let split_at = idx.partition_point(|&i| self.x[i][feature] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, count: 0 });
        let (l, r) = idx.split_at_mut(split_at);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

fn fit_tree(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig, mtry: usize, index: usize) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(cfg.seed, index));
    let n = y.len();
    let mut idx: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut g = Grower {
        x,
        y,
        cfg,
        mtry,
        nodes: Vec::new(),
    };
    g.grow(&mut idx, 0, &mut rng);
    Tree { nodes: g.nodes }
}

/// Fits `cfg.n_trees` trees in parallel; the result does not depend on the
/// thread count.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig) -> Result<ForestModel, RegressorError> {
    if x.is_empty() || y.is_empty() {
        return Err(RegressorError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(RegressorError::DimensionMismatch(format!("{} rows for {} targets", x.len(), y.len())));
    }
    if y.len() < 2 {
        return Err(RegressorError::InsufficientData("forest needs at least 2 rows".into()));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(RegressorError::DimensionMismatch("ragged or empty feature rows".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressorError::NumericalError("non-finite training data".into()));
    }
    if cfg.n_trees == 0 || cfg.min_leaf == 0 {
        return Err(RegressorError::InvalidConfig("n_trees and min_leaf must be positive".into()));
    }
    if let Some(f) = cfg.feature_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(RegressorError::InvalidConfig(format!("feature fraction {f}")));
        }
    }
    let mtry = cfg.features_per_node(d);
    let trees: Vec<Tree> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| fit_tree(x, y, cfg, mtry, i))
        .collect();
    Ok(ForestModel {
        trees,
        n_trees: cfg.n_trees,
        n_features: d,
        seed: cfg.seed,
        feature_fraction: mtry as f64 / d as f64,
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
    })
}

/// Mean of the trees' predictions, reduced in tree order.
pub fn predict_forest(model: &ForestModel, x: &[f64]) -> Result<f64, RegressorError> {
    if x.len() != model.n_features {
        return Err(RegressorError::DimensionMismatch(format!(
            "{} features for a forest trained on {}",
            x.len(),
            model.n_features
        )));
    }
    Ok(anchored_mean(model.trees.iter().map(|t| t.predict(x))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let y = vec![0.1; 20];
        let cfg = ForestConfig {
            n_trees: 30,
            ..Default::default()
        };
        let m = fit_forest(&x, &y, &cfg).unwrap();
        for row in &x {
            assert_eq!(predict_forest(&m, row).unwrap(), 0.1);
        }
    }

    #[test]
    fn single_binary_split() {
        let x: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 1.0, 1.0].iter().map(|&v| vec![v]).collect();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0];
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: 1,
            min_leaf: 1,
            bootstrap: false,
            ..Default::default()
        };
        let m = fit_forest(&x, &y, &cfg).unwrap();
        assert_eq!(predict_forest(&m, &[0.0]).unwrap(), 0.0);
        assert_eq!(predict_forest(&m, &[1.0]).unwrap(), 1.0);
        assert_eq!(m.trees[0].depth(), 1);
    }

    #[test]
    fn structural_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..200).map(|_| (0..9).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 3.0 + r[4] + rng.random::<f64>() * 0.1).collect();
        let cfg = ForestConfig {
            n_trees: 20,
            max_depth: 6,
            min_leaf: 3,
            ..Default::default()
        };
        let m = fit_forest(&x, &y, &cfg).unwrap();
        for t in &m.trees {
            assert!(t.depth() <= 6);
            assert!(t.leaves().all(|(_, c)| c >= 3));
        }
        assert!((m.feature_fraction - 3.0 / 9.0).abs() < 1e-15);
        let row = &x[7];
        let naive = m.trees.iter().map(|t| t.predict(row)).sum::<f64>() / 20.0;
        assert!((predict_forest(&m, row).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let cfg = ForestConfig::default();
        assert_eq!(fit_forest(&[], &[], &cfg), Err(RegressorError::EmptyInput));
        assert!(fit_forest(&[vec![1.0]], &[1.0, 2.0], &cfg).is_err());
        assert!(fit_forest(&[vec![1.0]], &[1.0], &cfg).is_err());
        let m = fit_forest(&[vec![1.0], vec![2.0]], &[1.0, 2.0], &ForestConfig { n_trees: 2, ..cfg }).unwrap();
        assert!(predict_forest(&m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.1, (i % 3) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
        let m = fit_forest(&x, &y, &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        let back: ForestModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
