//! Bagged linear SVMs trained with the Pegasos primal subgradient method.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, Row};
use crate::embeddings::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    /// Bootstrap replicates per one-vs-rest head.
    pub n_bags: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            n_bags: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    pub fn decision(&self, x: Row<'_>) -> f64 {
        x.dot(&self.weights) + self.bias
    }
}

/// One bag list per head; a single head for the positive class when k = 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub heads: Vec<Vec<LinearSvm>>,
}

impl SvmModel {
    /// Per head, σ of the mean decision value over its bags.
    pub fn head_scores(&self, x: Row<'_>) -> Vec<f64> {
        self.heads
            .iter()
            .map(|bags| sigmoid(bags.iter().map(|s| s.decision(x)).sum::<f64>() / bags.len() as f64))
            .collect()
    }

    pub fn scores(&self, x: Row<'_>) -> Vec<f64> {
        let s = self.head_scores(x);
        if let [p] = s.as_slice() {
            return vec![1.0 - p, *p];
        }
        let total: f64 = s.iter().sum();
        s.into_iter().map(|v| v / total).collect()
    }
}

/// Pegasos on the rows listed in `bag` (with repetition), labels ±1. The
/// bias is an extra constant feature and shares the regularizer.
pub(crate) fn pegasos(x: &FeatureMatrix, y: &[f64], bag: &[usize], p: &SvmParams, rng: &mut ChaCha8Rng) -> LinearSvm {
    let d = x.dim();
    // w = scale · v, with v[d] the bias coordinate
    let mut v = vec![0.0; d + 1];
    let mut scale = 1.0;
    let mut sq_norm_v = 0.0;
    let radius = 1.0 / p.lambda.sqrt();
    let row_sq: Vec<f64> = x.rows().map(|r| r.nonzeros().map(|(_, a)| a * a).sum::<f64>() + 1.0).collect();
    let mut order = bag.to_vec();
    let mut t = 0u64;
    for _ in 0..p.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (p.lambda * t as f64);
            let row = x.row(i);
            let dot_v = row.dot(&v[..d]) + v[d];
            let margin = y[i] * scale * dot_v;
            let shrink = 1.0 - 1.0 / t as f64;
            let dot_v = if shrink == 0.0 {
                v.iter_mut().for_each(|a| *a = 0.0);
                scale = 1.0;
                sq_norm_v = 0.0;
                0.0
            } else {
                scale *= shrink;
                dot_v
            };
            if margin < 1.0 {
                let coef = eta * y[i] / scale;
                row.axpy(coef, &mut v[..d]);
                v[d] += coef;
                sq_norm_v = (sq_norm_v + 2.0 * coef * dot_v + coef * coef * row_sq[i]).max(0.0);
            }
            let norm = scale * sq_norm_v.sqrt();
            if norm > radius {
                scale *= radius / norm;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|a| *a *= scale);
                sq_norm_v *= scale * scale;
                scale = 1.0;
            }
        }
        sq_norm_v = v.iter().map(|a| a * a).sum();
    }
    let mut weights: Vec<f64> = v.iter().map(|a| a * scale).collect();
    let bias = weights.pop().expect("bias coordinate");
    LinearSvm { weights, bias }
}

/// Bag `b` of head `h` is trained from the stream seeded with
/// `seed ^ (h · n_bags + b)`.
pub(crate) fn fit(x: &FeatureMatrix, y: &[usize], k: usize, p: &SvmParams, seed: u64) -> SvmModel {
    let n = x.n_rows();
    let positives: Vec<usize> = if k == 2 { vec![1] } else { (0..k).collect() };
    let targets: Vec<Vec<f64>> = positives
        .iter()
        .map(|&c| y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect())
        .collect();
    let tasks: Vec<(usize, usize)> = (0..positives.len()).flat_map(|h| (0..p.n_bags).map(move |b| (h, b))).collect();
    let trained: Vec<LinearSvm> = tasks
        .par_iter()
        .map(|&(h, b)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (h * p.n_bags + b) as u64);
            let bag: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            pegasos(x, &targets[h], &bag, p, &mut rng)
        })
        .collect();
    let mut it = trained.into_iter();
    let heads = positives.iter().map(|_| it.by_ref().take(p.n_bags).collect()).collect();
    SvmModel { heads }
}
