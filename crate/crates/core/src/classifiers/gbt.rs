//! First-order gradient boosting of regression trees on the logistic loss.
//!
//! Each round fits a squared-error tree to the residuals `y - σ(F)` and adds
//! the leaf means scaled by the shrinkage. Because the logistic loss has
//! curvature at most 1/4, such a step cannot raise the training loss while
//! the shrinkage stays at or below 8.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{Columns, FeatureMatrix, Row};
use super::tree::{build_tree, Sse, Tree, TreeConfig};
use crate::embeddings::{neg_log_sigmoid, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            max_depth: 3,
            shrinkage: 0.1,
            min_samples_leaf: 1,
        }
    }
}

/// One binary logistic model: `F(x) = base + Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtHead {
    pub base: f64,
    /// Leaf values already include the shrinkage.
    pub trees: Vec<Tree>,
}

impl GbtHead {
    pub fn raw(&self, x: Row<'_>) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// A single head for the positive class when k = 2, else one head per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub heads: Vec<GbtHead>,
}

impl GbtModel {
    pub fn scores(&self, x: Row<'_>) -> Vec<f64> {
        if let [head] = self.heads.as_slice() {
            let p = sigmoid(head.raw(x));
            return vec![1.0 - p, p];
        }
        let s: Vec<f64> = self.heads.iter().map(|h| sigmoid(h.raw(x))).collect();
        let total: f64 = s.iter().sum();
        s.into_iter().map(|v| v / total).collect()
    }
}

fn mean_log_loss(f: &[f64], y: &[f64]) -> f64 {
    let n = f.len() as f64;
    f.iter()
        .zip(y)
        .map(|(&fi, &yi)| if yi > 0.5 { neg_log_sigmoid(fi) } else { neg_log_sigmoid(-fi) })
        .sum::<f64>()
        / n
}

/// Fits one head on 0/1 targets; returns the training loss before the first
/// and after every round.
pub(crate) fn fit_head(x: &FeatureMatrix, cols: &Columns, y: &[f64], p: &GbtParams) -> (GbtHead, Vec<f64>) {
    let n = y.len();
    let prior = (y.iter().sum::<f64>() / n as f64).clamp(1e-12, 1.0 - 1e-12);
    let base = (prior / (1.0 - prior)).ln();
    let mut f = vec![base; n];
    let mut losses = vec![mean_log_loss(&f, y)];
    let cfg = TreeConfig {
        max_depth: Some(p.max_depth),
        min_samples_leaf: p.min_samples_leaf,
        max_features: None,
    };
    let weights = vec![1.0; n];
    // feature order is fixed when every feature is evaluated
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut trees = Vec::with_capacity(p.n_rounds);
    for _ in 0..p.n_rounds {
        let residuals: Vec<f64> = f.iter().zip(y).map(|(&fi, &yi)| yi - sigmoid(fi)).collect();
        let mut tree = build_tree(x, cols, &Sse { targets: &residuals }, &weights, &cfg, &mut rng);
        tree.map_leaves(|v| v * p.shrinkage);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += tree.predict(x.row(i));
        }
        losses.push(mean_log_loss(&f, y));
        trees.push(tree);
    }
    (GbtHead { base, trees }, losses)
}

/// Returns the model and, per round, the summed training loss of all heads.
pub(crate) fn fit(x: &FeatureMatrix, y: &[usize], k: usize, p: &GbtParams) -> (GbtModel, Vec<f64>) {
    let cols = Columns::new(x);
    let positives: Vec<usize> = if k == 2 { vec![1] } else { (0..k).collect() };
    let fitted: Vec<(GbtHead, Vec<f64>)> = positives
        .par_iter()
        .map(|&c| {
            let target: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            fit_head(x, &cols, &target, p)
        })
        .collect();
    let mut history = vec![0.0; p.n_rounds + 1];
    for (_, h) in &fitted {
        history.iter_mut().zip(h).for_each(|(a, b)| *a += b);
    }
    (
        GbtModel {
            heads: fitted.into_iter().map(|(h, _)| h).collect(),
        },
        history,
    )
}
