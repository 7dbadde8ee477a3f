//! CART builder shared by the forest (Gini) and boosting (squared error).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{Columns, FeatureMatrix, Row};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: Row<'_>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left as usize).max(go(nodes, *right as usize)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature as usize),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub(crate) fn map_leaves(&mut self, f: impl Fn(f64) -> f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value = f(*value);
            }
        }
    }
}

/// Node statistics with a weighted impurity (impurity × node weight), so the
/// gain of a split is `parent - left - right`.
pub(crate) trait Criterion: Sync {
    type Acc: Clone;
    fn zero(&self) -> Self::Acc;
    fn add(&self, acc: &mut Self::Acc, row: usize, w: f64);
    fn rest(&self, total: &Self::Acc, left: &Self::Acc) -> Self::Acc;
    fn impurity(&self, acc: &Self::Acc) -> f64;
    fn is_pure(&self, acc: &Self::Acc) -> bool;
    fn leaf_value(&self, acc: &Self::Acc) -> f64;
}

pub(crate) struct Gini<'a> {
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl Criterion for Gini<'_> {
    /// class weights, then the total
    type Acc = Vec<f64>;

    fn zero(&self) -> Vec<f64> {
        vec![0.0; self.n_classes + 1]
    }

    fn add(&self, acc: &mut Vec<f64>, row: usize, w: f64) {
        acc[self.labels[row]] += w;
        acc[self.n_classes] += w;
    }

    fn rest(&self, total: &Vec<f64>, left: &Vec<f64>) -> Vec<f64> {
        total.iter().zip(left).map(|(t, l)| t - l).collect()
    }

    fn impurity(&self, acc: &Vec<f64>) -> f64 {
        let w = acc[self.n_classes];
        if w <= 0.0 {
            return 0.0;
        }
        w - acc[..self.n_classes].iter().map(|c| c * c).sum::<f64>() / w
    }

    fn is_pure(&self, acc: &Vec<f64>) -> bool {
        acc[..self.n_classes].iter().filter(|&&c| c > 0.0).count() <= 1
    }

    /// Majority class, lowest index on ties.
    fn leaf_value(&self, acc: &Vec<f64>) -> f64 {
        let mut best = 0;
        for c in 1..self.n_classes {
            if acc[c] > acc[best] {
                best = c;
            }
        }
        best as f64
    }
}

pub(crate) struct Sse<'a> {
    pub targets: &'a [f64],
}

impl Criterion for Sse<'_> {
    /// weight, weighted sum, weighted sum of squares
    type Acc = [f64; 3];

    fn zero(&self) -> [f64; 3] {
        [0.0; 3]
    }

    fn add(&self, acc: &mut [f64; 3], row: usize, w: f64) {
        let y = self.targets[row];
        acc[0] += w;
        acc[1] += w * y;
        acc[2] += w * y * y;
    }

    fn rest(&self, total: &[f64; 3], left: &[f64; 3]) -> [f64; 3] {
        [total[0] - left[0], total[1] - left[1], total[2] - left[2]]
    }

    fn impurity(&self, acc: &[f64; 3]) -> f64 {
        if acc[0] <= 0.0 {
            return 0.0;
        }
        (acc[2] - acc[1] * acc[1] / acc[0]).max(0.0)
    }

    fn is_pure(&self, acc: &[f64; 3]) -> bool {
        self.impurity(acc) <= 1e-14 * acc[2].max(1e-300)
    }

    fn leaf_value(&self, acc: &[f64; 3]) -> f64 {
        acc[1] / acc[0]
    }
}

pub(crate) struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Non-constant features to evaluate per node; `None` evaluates all.
    pub max_features: Option<usize>,
}

struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a, C: Criterion> {
    x: &'a FeatureMatrix,
    cols: &'a Columns,
    crit: &'a C,
    weights: &'a [f64],
    cfg: &'a TreeConfig,
    in_node: Vec<bool>,
    seen: Vec<bool>,
    feature_mark: Vec<bool>,
    nodes: Vec<Node>,
}

/// Grows one tree on the rows with non-zero weight.
pub(crate) fn build_tree<C: Criterion>(
    x: &FeatureMatrix,
    cols: &Columns,
    crit: &C,
    weights: &[f64],
    cfg: &TreeConfig,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let samples: Vec<u32> = (0..x.n_rows() as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    let mut b = Builder {
        x,
        cols,
        crit,
        weights,
        cfg,
        in_node: vec![false; x.n_rows()],
        seen: vec![false; x.n_rows()],
        feature_mark: vec![false; x.dim()],
        nodes: Vec::new(),
    };
    b.grow(samples, 0, rng);
    Tree { nodes: b.nodes }
}

impl<C: Criterion> Builder<'_, C> {
    fn grow(&mut self, samples: Vec<u32>, depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let mut total = self.crit.zero();
        for &r in &samples {
            self.crit.add(&mut total, r as usize, self.weights[r as usize]);
        }
        let id = self.nodes.len() as u32;
        let leaf = Node::Leaf {
            value: self.crit.leaf_value(&total),
        };
        let depth_capped = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if depth_capped || samples.len() < 2 * self.cfg.min_samples_leaf || self.crit.is_pure(&total) {
            self.nodes.push(leaf);
            return id;
        }
        let Some(split) = self.best_split(&samples, &total, rng) else {
            self.nodes.push(leaf);
            return id;
        };
        let (left, right): (Vec<u32>, Vec<u32>) = samples
            .iter()
            .partition(|&&r| self.x.row(r as usize).get(split.feature) <= split.threshold);
        self.nodes.push(leaf);
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        self.nodes[id as usize] = Node::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn candidates(&mut self, samples: &[u32]) -> Vec<usize> {
        if !self.x.is_sparse() {
            return (0..self.x.dim()).collect();
        }
        let mut out = Vec::new();
        for &r in samples {
            for (j, _) in self.x.row(r as usize).nonzeros() {
                if !self.feature_mark[j] {
                    self.feature_mark[j] = true;
                    out.push(j);
                }
            }
        }
        for &j in &out {
            self.feature_mark[j] = false;
        }
        out.sort_unstable();
        out
    }

    fn best_split(&mut self, samples: &[u32], total: &C::Acc, rng: &mut ChaCha8Rng) -> Option<Split> {
        let mut cand = self.candidates(samples);
        for &r in samples {
            self.in_node[r as usize] = true;
        }
        let parent = self.crit.impurity(total);
        let mut best: Option<Split> = None;
        let mut informative = 0;
        for i in 0..cand.len() {
            if self.cfg.max_features.is_some() {
                let j = rng.random_range(i..cand.len());
                cand.swap(i, j);
            }
            let f = cand[i];
            let values = self.sorted_values(f, samples);
            if values.first().map(|v| v.0) == values.last().map(|v| v.0) {
                continue;
            }
            informative += 1;
            self.scan(f, &values, total, parent, &mut best);
            if self.cfg.max_features.is_some_and(|m| informative >= m) {
                break;
            }
        }
        for &r in samples {
            self.in_node[r as usize] = false;
        }
        best
    }

    /// Node rows ordered by their value of feature `f`.
    fn sorted_values(&mut self, f: usize, samples: &[u32]) -> Vec<(f64, u32)> {
        let cols = self.cols;
        let col = &cols.cols[f];
        let n = samples.len();
        let gather_cost = n * (usize::BITS - n.leading_zeros()) as usize;
        if gather_cost < col.len() {
            let mut v: Vec<(f64, u32)> = samples.iter().map(|&r| (self.x.row(r as usize).get(f), r)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            return v;
        }
        let in_node: Vec<(f64, u32)> = col.iter().copied().filter(|&(_, r)| self.in_node[r as usize]).collect();
        if !cols.implicit_zeros {
            return in_node;
        }
        let mut out = Vec::with_capacity(n);
        let split = in_node.partition_point(|&(v, _)| v < 0.0);
        out.extend_from_slice(&in_node[..split]);
        for &(_, r) in &in_node {
            self.seen[r as usize] = true;
        }
        out.extend(samples.iter().filter(|&&r| !self.seen[r as usize]).map(|&r| (0.0, r)));
        for &(_, r) in &in_node {
            self.seen[r as usize] = false;
        }
        out.extend_from_slice(&in_node[split..]);
        out
    }

    fn scan(&self, f: usize, values: &[(f64, u32)], total: &C::Acc, parent: f64, best: &mut Option<Split>) {
        let min_leaf = self.cfg.min_samples_leaf;
        let mut left = self.crit.zero();
        for i in 0..values.len() - 1 {
            let (v, r) = values[i];
            self.crit.add(&mut left, r as usize, self.weights[r as usize]);
            let next = values[i + 1].0;
            if v == next || i + 1 < min_leaf || values.len() - (i + 1) < min_leaf {
                continue;
            }
            let right = self.crit.rest(total, &left);
            let gain = parent - self.crit.impurity(&left) - self.crit.impurity(&right);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = v / 2.0 + next / 2.0;
                if threshold >= next || threshold < v {
                    threshold = v;
                }
                *best = Some(Split {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::tfidf::SparseVector;

    fn cfg() -> TreeConfig {
        TreeConfig {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }

    #[test]
    fn xor_needs_a_zero_gain_root_split() {
        let pts = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let labels = [0, 1, 1, 0];
        let x = FeatureMatrix::dense(pts.iter().map(|p| p.to_vec()).collect()).unwrap();
        let cols = Columns::new(&x);
        let crit = Gini {
            labels: &labels,
            n_classes: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = build_tree(&x, &cols, &crit, &[1.0; 4], &cfg(), &mut rng);
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(t.predict(x.row(i)), y as f64);
        }
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn sparse_and_dense_build_the_same_tree() {
        let dense_rows = vec![
            vec![0.0, 0.5, 0.0],
            vec![0.3, 0.0, 0.0],
            vec![0.0, 0.0, -0.2],
            vec![0.7, 0.1, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.2, 0.9, 0.4],
        ];
        let targets = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let sparse_rows = dense_rows
            .iter()
            .map(|r| {
                let (indices, values) = r
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j as u32, v))
                    .unzip();
                SparseVector { dim: 3, indices, values }
            })
            .collect();
        let dense = FeatureMatrix::dense(dense_rows).unwrap();
        let sparse = FeatureMatrix::sparse(3, sparse_rows).unwrap();
        let crit = Sse { targets: &targets };
        let tree = |x: &FeatureMatrix| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            build_tree(x, &Columns::new(x), &crit, &[1.0; 6], &cfg(), &mut rng)
        };
        let (a, b) = (tree(&dense), tree(&sparse));
        for i in 0..6 {
            assert_eq!(a.predict(dense.row(i)), targets[i]);
            assert_eq!(b.predict(sparse.row(i)), targets[i]);
        }
    }

    #[test]
    fn depth_cap_and_weights() {
        let x = FeatureMatrix::dense((0..8).map(|i| vec![i as f64]).collect()).unwrap();
        let targets: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let crit = Sse { targets: &targets };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = TreeConfig {
            max_depth: Some(1),
            ..cfg()
        };
        let t = build_tree(&x, &Columns::new(&x), &crit, &[1.0; 8], &c, &mut rng);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(x.row(0)), 1.5);
        assert_eq!(t.predict(x.row(7)), 5.5);

        // zero-weight rows are out of bag
        let w = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let t = build_tree(&x, &Columns::new(&x), &crit, &w, &c, &mut rng);
        assert_eq!(t.predict(x.row(0)), 4.5);
    }
}
