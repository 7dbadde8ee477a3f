//! Multinomial logistic regression, full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, Row};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogregParams {
    pub learning_rate: f64,
    /// L2 penalty on the weights; the bias is not penalized.
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once one iteration lowers the loss by less than this.
    pub tol: f64,
}

impl Default for LogregParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2: 1e-4,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregModel {
    /// k × d
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogregModel {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            weights: vec![vec![0.0; d]; k],
            bias: vec![0.0; k],
        }
    }

    pub fn logits(&self, x: Row<'_>) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).map(|(w, b)| x.dot(w) + b).collect()
    }

    pub fn scores(&self, x: Row<'_>) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    fn step(&self, grad: &LogregModel, lr: f64) -> LogregModel {
        let sub = |a: &[f64], g: &[f64]| a.iter().zip(g).map(|(x, d)| x - lr * d).collect();
        LogregModel {
            weights: self.weights.iter().zip(&grad.weights).map(|(w, g)| sub(w, g)).collect(),
            bias: sub(&self.bias, &grad.bias),
        }
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn penalty(m: &LogregModel, l2: f64) -> f64 {
    0.5 * l2 * m.weights.iter().flatten().map(|w| w * w).sum::<f64>()
}

/// Mean cross-entropy plus `l2/2 · ‖W‖²`.
pub fn loss(m: &LogregModel, x: &FeatureMatrix, y: &[usize], l2: f64) -> f64 {
    let n = x.n_rows() as f64;
    let ce: f64 = x
        .rows()
        .zip(y)
        .map(|(row, &c)| {
            let z = m.logits(row);
            let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() - z[c]
        })
        .sum();
    ce / n + penalty(m, l2)
}

/// Loss and its gradient with respect to weights and bias.
pub fn loss_and_gradient(m: &LogregModel, x: &FeatureMatrix, y: &[usize], l2: f64) -> (f64, LogregModel) {
    let n = x.n_rows() as f64;
    let (k, d) = (m.bias.len(), x.dim());
    let mut g = LogregModel::zeros(k, d);
    let mut ce = 0.0;
    for (row, &c) in x.rows().zip(y) {
        let z = m.logits(row);
        let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ce += mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() - z[c];
        for (j, p) in softmax(&z).into_iter().enumerate() {
            let r = (p - if j == c { 1.0 } else { 0.0 }) / n;
            row.axpy(r, &mut g.weights[j]);
            g.bias[j] += r;
        }
    }
    for (gw, w) in g.weights.iter_mut().zip(&m.weights) {
        gw.iter_mut().zip(w).for_each(|(a, b)| *a += l2 * b);
    }
    (ce / n + penalty(m, l2), g)
}

/// Gradient descent from zero weights. A step that would raise the loss is
/// halved until it does not, so the recorded loss never increases.
pub(crate) fn fit(x: &FeatureMatrix, y: &[usize], k: usize, p: &LogregParams) -> (LogregModel, Vec<f64>) {
    let mut m = LogregModel::zeros(k, x.dim());
    let (mut current, mut grad) = loss_and_gradient(&m, x, y, p.l2);
    let mut history = vec![current];
    let mut lr = p.learning_rate;
    for _ in 0..p.max_iter {
        let accepted = loop {
            let cand = m.step(&grad, lr);
            let l = loss(&cand, x, y, p.l2);
            if l <= current {
                break Some((cand, l));
            }
            lr /= 2.0;
            if lr < p.learning_rate * 1e-12 {
                break None;
            }
        };
        let Some((cand, l)) = accepted else { break };
        let improvement = current - l;
        m = cand;
        current = l;
        history.push(current);
        if improvement < p.tol {
            break;
        }
        grad = loss_and_gradient(&m, x, y, p.l2).1;
    }
    (m, history)
}
