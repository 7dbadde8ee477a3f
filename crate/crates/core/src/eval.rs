//! Train/test splitting, accuracy, F1 and AUROC.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{argmax, Dataset};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            stratified: true,
            seed: 0,
        }
    }
}

/// Disjoint, exhaustive train/test index sets, each sorted ascending.
///
/// Stratified: each class keeps `round(n_c · fraction)` items for training,
/// clamped so both sides get at least one.
pub fn split_indices(labels: &[usize], cfg: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::Config(format!("train_fraction must lie in (0, 1), got {}", cfg.train_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let take = |n: usize| ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n - 1);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    if cfg.stratified {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(i);
        }
        let singles: Vec<usize> = (0..k).filter(|&c| groups[c].len() == 1).collect();
        if !singles.is_empty() {
            return Err(Error::Validation(format!(
                "stratified split needs at least 2 items per class; class index(es) {singles:?} have 1"
            )));
        }
        for mut g in groups.into_iter().filter(|g| !g.is_empty()) {
            g.shuffle(&mut rng);
            let n_train = take(g.len());
            test.extend_from_slice(&g[n_train..]);
            g.truncate(n_train);
            train.extend(g);
        }
    } else {
        if labels.len() < 2 {
            return Err(Error::Validation("a split needs at least 2 items".into()));
        }
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        let n_train = take(all.len());
        test = all.split_off(n_train);
        train = all;
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(data: &Dataset, cfg: &SplitConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(&data.labels, cfg)?;
    Ok((data.select(&train), data.select(&test)))
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Validation(format!("length mismatch: {a} true labels vs {b} predictions")));
    }
    if a == 0 {
        return Err(Error::Validation("metrics need at least one item".into()));
    }
    Ok(())
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// `m[true][pred]`
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mut m = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::Validation(format!("label outside [0, {k})")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// F1 of class index 1.
    BinaryPositive,
    /// Unweighted mean of per-class F1 over all classes.
    Macro,
}

/// (precision, recall, f1) of class `c`; an empty denominator yields 0.
fn class_prf(cm: &[Vec<u64>], c: usize) -> (f64, f64, f64) {
    let tp = cm[c][c] as f64;
    let predicted: u64 = cm.iter().map(|r| r[c]).sum();
    let actual: u64 = cm[c].iter().sum();
    let ratio = |a: f64, b: u64| if b == 0 { 0.0 } else { a / b as f64 };
    let (p, r) = (ratio(tp, predicted), ratio(tp, actual));
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

pub fn f1(y_true: &[usize], y_pred: &[usize], k: usize, averaging: Averaging) -> Result<f64> {
    let cm = confusion_matrix(y_true, y_pred, k)?;
    match averaging {
        Averaging::BinaryPositive => {
            if k != 2 {
                return Err(Error::Validation(format!("binary F1 needs 2 classes, got {k}")));
            }
            Ok(class_prf(&cm, 1).2)
        }
        Averaging::Macro => {
            for c in 0..k {
                if cm[c].iter().sum::<u64>() == 0 && cm.iter().all(|r| r[c] == 0) {
                    log::warn!("class index {c} absent from labels and predictions; counted as F1 = 0");
                }
            }
            Ok((0..k).map(|c| class_prf(&cm, c).2).sum::<f64>() / k as f64)
        }
    }
}

/// Mann–Whitney AUROC with midranks for ties.
pub fn auroc_binary(y_true: &[bool], scores: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), scores.len())?;
    let n_pos = y_true.iter().filter(|&&y| y).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both positive and negative items".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("AUROC scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&o| y_true[o]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Trapezoidal area under the empirical ROC curve; tied scores form one
/// diagonal segment.
pub fn auroc_trapezoid(y_true: &[bool], scores: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), scores.len())?;
    let n_pos = y_true.iter().filter(|&&y| y).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both positive and negative items".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2 = 0u64; // twice the area in units of 1/(P·N)
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if y_true[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
        i = j;
    }
    Ok(area2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Macro average of class-vs-rest AUROC over the classes present in `y_true`.
pub fn auroc_ovr_macro(y_true: &[usize], scores: &[Vec<f64>]) -> Result<f64> {
    check_lengths(y_true.len(), scores.len())?;
    let k = scores[0].len();
    if scores.iter().any(|s| s.len() != k) {
        return Err(Error::Validation("score rows differ in length".into()));
    }
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..k {
        let y: Vec<bool> = y_true.iter().map(|&l| l == c).collect();
        if !y.contains(&true) {
            log::warn!("class index {c} has no positives; skipped in macro AUROC");
            continue;
        }
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        match auroc_binary(&y, &col) {
            Ok(a) => {
                total += a;
                used += 1;
            }
            Err(Error::UndefinedMetric(_)) => log::warn!("class index {c} has no negatives; skipped"),
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric("macro AUROC needs at least two classes present".into()));
    }
    Ok(total / used as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Class-vs-rest AUROC; absent when the class has no positives or no
    /// negatives among the evaluated items.
    pub auroc: Option<f64>,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub family: String,
    pub n_items: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub f1_averaging: Averaging,
    pub auroc: f64,
    pub label_names: Vec<String>,
    pub per_class: Vec<ClassReport>,
    /// Rows are true labels, columns predictions.
    pub confusion_matrix: Vec<Vec<u64>>,
}

/// Scores predictions. Two classes: F1 and AUROC of class index 1. More:
/// macro F1 and one-vs-rest macro AUROC.
pub fn evaluate(task: &str, family: &str, label_names: &[String], y_true: &[usize], scores: &[Vec<f64>]) -> Result<EvalReport> {
    check_lengths(y_true.len(), scores.len())?;
    let k = label_names.len();
    let y_pred: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let cm = confusion_matrix(y_true, &y_pred, k)?;
    let (averaging, auroc) = if k == 2 {
        let y: Vec<bool> = y_true.iter().map(|&l| l == 1).collect();
        let col: Vec<f64> = scores.iter().map(|s| s[1]).collect();
        (Averaging::BinaryPositive, auroc_binary(&y, &col)?)
    } else {
        (Averaging::Macro, auroc_ovr_macro(y_true, scores)?)
    };
    let per_class = (0..k)
        .map(|c| {
            let (precision, recall, f1) = class_prf(&cm, c);
            let y: Vec<bool> = y_true.iter().map(|&l| l == c).collect();
            let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
            ClassReport {
                label: label_names[c].clone(),
                precision,
                recall,
                f1,
                auroc: auroc_binary(&y, &col).ok(),
                support: cm[c].iter().sum(),
            }
        })
        .collect();
    Ok(EvalReport {
        task: task.to_string(),
        family: family.to_string(),
        n_items: y_true.len(),
        accuracy: accuracy(y_true, &y_pred)?,
        f1: f1(y_true, &y_pred, k, averaging)?,
        f1_averaging: averaging,
        auroc,
        label_names: label_names.to_vec(),
        per_class,
        confusion_matrix: cm,
    })
}
