use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{Columns, FeatureMatrix, Row};
use super::tree::{build_tree, Gini, Tree, TreeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means ⌊√d⌋.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

/// Trees whose leaves hold a class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn vote_counts(&self, x: Row<'_>, k: usize) -> Vec<u32> {
        let mut votes = vec![0u32; k];
        for t in &self.trees {
            votes[t.predict(x) as usize] += 1;
        }
        votes
    }

    pub fn scores(&self, x: Row<'_>, k: usize) -> Vec<f64> {
        let n = self.trees.len() as f64;
        self.vote_counts(x, k).into_iter().map(|v| v as f64 / n).collect()
    }
}

/// Tree `i` uses the stream seeded with `seed ^ i` for its bootstrap sample
/// and feature draws, so the result does not depend on thread scheduling.
pub(crate) fn fit(x: &FeatureMatrix, y: &[usize], k: usize, p: &ForestParams, seed: u64) -> ForestModel {
    let n = x.n_rows();
    let cols = Columns::new(x);
    let crit = Gini { labels: y, n_classes: k };
    let cfg = TreeConfig {
        max_depth: p.max_depth,
        min_samples_leaf: p.min_samples_leaf,
        max_features: Some(p.max_features.unwrap_or(((x.dim() as f64).sqrt() as usize).max(1))),
    };
    let trees = (0..p.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
            let mut weights = vec![0.0; n];
            for _ in 0..n {
                weights[rng.random_range(0..n)] += 1.0;
            }
            build_tree(x, &cols, &crit, &weights, &cfg, &mut rng)
        })
        .collect();
    ForestModel { trees }
}
