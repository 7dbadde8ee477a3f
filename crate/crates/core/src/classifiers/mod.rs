//! Four classifier families behind one train / predict interface.

pub mod forest;
pub mod gbt;
pub mod logreg;
mod matrix;
pub mod svm;
pub mod tree;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::artifact::{read_json, write_json_pretty};
use crate::{Error, Result};

pub use forest::{ForestModel, ForestParams};
pub use gbt::{GbtModel, GbtParams};
pub use logreg::{LogregModel, LogregParams};
pub use matrix::{FeatureMatrix, Row};
pub use svm::{SvmModel, SvmParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logreg,
    RandomForest,
    Gbt,
    BaggingSvm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Logreg, Family::RandomForest, Family::Gbt, Family::BaggingSvm];

    pub fn name(self) -> &'static str {
        match self {
            Family::Logreg => "logreg",
            Family::RandomForest => "random_forest",
            Family::Gbt => "gbt",
            Family::BaggingSvm => "bagging_svm",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?} (expected logreg, random_forest, gbt or bagging_svm)")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Hyperparameters {
    Logreg(LogregParams),
    RandomForest(ForestParams),
    Gbt(GbtParams),
    BaggingSvm(SvmParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub hyper: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    /// Family defaults.
    pub fn new(family: Family, seed: u64) -> Self {
        let hyper = match family {
            Family::Logreg => Hyperparameters::Logreg(LogregParams::default()),
            Family::RandomForest => Hyperparameters::RandomForest(ForestParams::default()),
            Family::Gbt => Hyperparameters::Gbt(GbtParams::default()),
            Family::BaggingSvm => Hyperparameters::BaggingSvm(SvmParams::default()),
        };
        Self { hyper, seed }
    }

    pub fn family(&self) -> Family {
        match self.hyper {
            Hyperparameters::Logreg(_) => Family::Logreg,
            Hyperparameters::RandomForest(_) => Family::RandomForest,
            Hyperparameters::Gbt(_) => Family::Gbt,
            Hyperparameters::BaggingSvm(_) => Family::BaggingSvm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.family())));
        match &self.hyper {
            Hyperparameters::Logreg(p) => {
                if !(p.learning_rate > 0.0) || !(p.l2 >= 0.0) || p.max_iter == 0 || !(p.tol >= 0.0) {
                    return bad(format!("need learning_rate > 0, l2 >= 0, max_iter >= 1, tol >= 0; got {p:?}"));
                }
            }
            Hyperparameters::RandomForest(p) => {
                if p.n_trees == 0 || p.min_samples_leaf == 0 || p.max_depth == Some(0) || p.max_features == Some(0) {
                    return bad(format!("need n_trees, min_samples_leaf, max_depth, max_features >= 1; got {p:?}"));
                }
            }
            Hyperparameters::Gbt(p) => {
                if p.n_rounds == 0 || p.max_depth == 0 || p.min_samples_leaf == 0 || !(p.shrinkage > 0.0 && p.shrinkage <= 1.0) {
                    return bad(format!("need n_rounds, max_depth, min_samples_leaf >= 1 and 0 < shrinkage <= 1; got {p:?}"));
                }
            }
            Hyperparameters::BaggingSvm(p) => {
                if !(p.lambda > 0.0) || p.epochs == 0 || p.n_bags == 0 {
                    return bad(format!("need lambda > 0, epochs >= 1, n_bags >= 1; got {p:?}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        let d = Self {
            features,
            labels,
            label_names,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::Validation("dataset is empty".into()));
        }
        if self.features.n_rows() != self.labels.len() {
            return Err(Error::Validation(format!(
                "{} feature rows but {} labels",
                self.features.n_rows(),
                self.labels.len()
            )));
        }
        let k = self.label_names.len();
        if let Some(l) = self.labels.iter().find(|&&l| l >= k) {
            return Err(Error::Validation(format!("label {l} outside [0, {k})")));
        }
        if let Some(i) = (0..self.len()).find(|&i| !self.features.row(i).is_finite()) {
            return Err(Error::Validation(format!("feature row {i} contains a non-finite value")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameters {
    /// Fallback when the training data holds a single class.
    Constant { class: usize },
    Logreg(LogregModel),
    RandomForest(ForestModel),
    Gbt(GbtModel),
    BaggingSvm(SvmModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub label_names: Vec<String>,
    pub dim: usize,
    pub parameters: Parameters,
    /// Caller-owned provenance such as the feature fingerprint.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Trains a model; see [`train_with_history`].
pub fn train(data: &Dataset, spec: &ModelSpec) -> Result<TrainedModel> {
    train_with_history(data, spec).map(|(m, _)| m)
}

/// Trains a model and returns the per-iteration training loss for the
/// families that optimize one (logistic regression, boosting).
pub fn train_with_history(data: &Dataset, spec: &ModelSpec) -> Result<(TrainedModel, Vec<f64>)> {
    data.validate()?;
    spec.validate()?;
    let k = data.n_classes();
    let (x, y) = (&data.features, data.labels.as_slice());
    let first = y[0];
    let (parameters, history) = if y.iter().all(|&l| l == first) {
        log::warn!(
            "training data holds only class {:?}; fitting a constant model",
            data.label_names[first]
        );
        (Parameters::Constant { class: first }, Vec::new())
    } else {
        match &spec.hyper {
            Hyperparameters::Logreg(p) => {
                let (m, h) = logreg::fit(x, y, k, p);
                (Parameters::Logreg(m), h)
            }
            Hyperparameters::RandomForest(p) => (Parameters::RandomForest(forest::fit(x, y, k, p, spec.seed)), Vec::new()),
            Hyperparameters::Gbt(p) => {
                let (m, h) = gbt::fit(x, y, k, p);
                (Parameters::Gbt(m), h)
            }
            Hyperparameters::BaggingSvm(p) => (Parameters::BaggingSvm(svm::fit(x, y, k, p, spec.seed)), Vec::new()),
        }
    };
    Ok((
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            spec: spec.clone(),
            label_names: data.label_names.clone(),
            dim: x.dim(),
            parameters,
            metadata: serde_json::Value::Null,
        },
        history,
    ))
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Per-class scores, higher meaning more likely.
    pub fn predict_scores(&self, x: Row<'_>) -> Result<Vec<f64>> {
        if x.dim() != self.dim {
            return Err(Error::Validation(format!(
                "feature dimension {} does not match the model's {}",
                x.dim(),
                self.dim
            )));
        }
        let k = self.n_classes();
        Ok(match &self.parameters {
            Parameters::Constant { class } => (0..k).map(|c| if c == *class { 1.0 } else { 0.0 }).collect(),
            Parameters::Logreg(m) => m.scores(x),
            Parameters::RandomForest(m) => m.scores(x, k),
            Parameters::Gbt(m) => m.scores(x),
            Parameters::BaggingSvm(m) => m.scores(x),
        })
    }

    pub fn predict(&self, x: Row<'_>) -> Result<usize> {
        self.predict_scores(x).map(|s| argmax(&s))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::json("model", e))?;
        Self::from_value(v)
    }

    fn from_value(v: serde_json::Value) -> Result<Self> {
        let found = v.get("format_version").and_then(|f| f.as_u64()).unwrap_or(0) as u32;
        if found != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "model".into(),
                found,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        serde_json::from_value(v).map_err(|e| Error::json("model", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_pretty(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_value(read_json(path)?)
    }
}

#[cfg(test)]
mod tests;
