//! Negative-sampling objective for one (center, context) pair.
//!
//! With input vector `v` of the center token, output vector `u_c` of the
//! context token and output vectors `u_k` of the sampled negatives, the loss
//! minimized is
//!
//! ```text
//! L = -ln σ(u_c·v) - Σ_k ln σ(-u_k·v)
//! ```

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)` without overflow for large |x|.
pub(crate) fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss and its gradients for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradients {
    pub loss: f64,
    pub d_input: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

/// Analytic loss and gradients of the negative-sampling objective.
pub fn sgns_loss_and_gradients(input: &[f64], positive: &[f64], negatives: &[&[f64]]) -> SgnsGradients {
    let dim = input.len();
    let mut d_input = vec![0.0; dim];
    let s = dot(positive, input);
    let mut loss = neg_log_sigmoid(s);
    let g = sigmoid(s) - 1.0;
    for j in 0..dim {
        d_input[j] += g * positive[j];
    }
    let d_positive = input.iter().map(|x| g * x).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for u in negatives {
        let s = dot(u, input);
        loss += neg_log_sigmoid(-s);
        let g = sigmoid(s);
        for j in 0..dim {
            d_input[j] += g * u[j];
        }
        d_negatives.push(input.iter().map(|x| g * x).collect());
    }
    SgnsGradients {
        loss,
        d_input,
        d_positive,
        d_negatives,
    }
}

/// Parameter storage the training kernel reads and writes through a shared
/// reference: `Cell`s for the deterministic single-thread path, relaxed
/// atomics for the unsynchronized multi-worker path.
pub(crate) trait ParamStore {
    fn get(&self, i: usize) -> f64;
    fn add(&self, i: usize, delta: f64);
}

impl ParamStore for [Cell<f64>] {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        self[i].get()
    }

    #[inline]
    fn add(&self, i: usize, delta: f64) {
        self[i].set(self[i].get() + delta);
    }
}

impl ParamStore for [AtomicU64] {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn add(&self, i: usize, delta: f64) {
        let v = ParamStore::get(self, i) + delta;
        self[i].store(v.to_bits(), Ordering::Relaxed);
    }
}

/// One SGD step on a pair. Every gradient is taken at the pre-step values of
/// the rows it reads; output rows are updated target by target, the input
/// row once at the end. Returns the pair loss before the step.
pub(crate) fn sgd_pair<S: ParamStore + ?Sized>(
    input: &S,
    output: &S,
    dim: usize,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: f64,
    v: &mut [f64],
    grad_v: &mut [f64],
) -> f64 {
    let base_in = center * dim;
    for j in 0..dim {
        v[j] = input.get(base_in + j);
        grad_v[j] = 0.0;
    }
    let mut loss = 0.0;
    let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (target, label) in targets {
        let base_out = target * dim;
        let mut s = 0.0;
        for j in 0..dim {
            s += v[j] * output.get(base_out + j);
        }
        loss += if label > 0.0 { neg_log_sigmoid(s) } else { neg_log_sigmoid(-s) };
        let g = (label - sigmoid(s)) * lr;
        for j in 0..dim {
            grad_v[j] += g * output.get(base_out + j);
            output.add(base_out + j, g * v[j]);
        }
    }
    for j in 0..dim {
        input.add(base_in + j, grad_v[j]);
    }
    loss
}
