//! Glue between tokens, features, labels and models: training a task model
//! with its holdout split, and reloading the exact featurization at
//! evaluation and prediction time.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::classifiers::{train_with_history, Dataset, FeatureMatrix, ModelSpec, TrainedModel};
use crate::embeddings::{embed_document, EmbeddingMatrix};
use crate::eval::{evaluate, split_indices, EvalReport, SplitConfig};
use crate::labels::Task;
use crate::preprocess::{TokenPipeline, TokenizedSpeech};
use crate::tfidf::{TfidfModel, DEFAULT_MIN_DF};
use crate::{Error, Result};

/// How a model's inputs were computed; stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Mean skip-gram input vector of the document's tokens.
    Embedding {
        pipeline_fingerprint: String,
        embeddings_digest: String,
    },
    /// TF-IDF fitted on the training split, stored inline.
    Tfidf {
        pipeline_fingerprint: String,
        model: serde_json::Value,
    },
}

impl FeatureSpec {
    pub fn pipeline_fingerprint(&self) -> &str {
        match self {
            FeatureSpec::Embedding {
                pipeline_fingerprint, ..
            }
            | FeatureSpec::Tfidf {
                pipeline_fingerprint, ..
            } => pipeline_fingerprint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub task: Task,
    pub features: FeatureSpec,
    pub split: SplitConfig,
    pub train_u_ids: Vec<u64>,
    pub holdout_u_ids: Vec<u64>,
}

impl ModelMetadata {
    pub fn of(model: &TrainedModel) -> Result<Self> {
        serde_json::from_value(model.metadata.clone()).map_err(|e| Error::json("model metadata", e))
    }
}

pub enum Featurizer {
    Embedding(EmbeddingMatrix),
    Tfidf(TfidfModel),
}

impl Featurizer {
    /// Feature rows plus, per document, whether no token was known.
    pub fn features(&self, docs: &[&[String]]) -> Result<(FeatureMatrix, Vec<bool>)> {
        match self {
            Featurizer::Embedding(m) => {
                let vecs: Vec<_> = docs.iter().map(|d| embed_document(d, m)).collect();
                let oov = vecs.iter().map(|v| v.oov).collect();
                let x = if vecs.is_empty() {
                    FeatureMatrix::Dense {
                        dim: m.dim(),
                        data: Vec::new(),
                    }
                } else {
                    FeatureMatrix::dense(vecs.into_iter().map(|v| v.values).collect())?
                };
                Ok((x, oov))
            }
            Featurizer::Tfidf(t) => {
                let rows: Vec<_> = docs.iter().map(|d| t.transform(d)).collect();
                let oov = rows.iter().map(|r| r.is_zero()).collect();
                Ok((FeatureMatrix::sparse(t.dim(), rows)?, oov))
            }
        }
    }
}

fn check(what: &str, expected: &str, actual: &str) -> Result<()> {
    if expected != actual {
        return Err(Error::FingerprintMismatch {
            what: what.to_string(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

/// Rebuilds the featurizer a model was trained with, refusing a pipeline or
/// embedding model that differs from the recorded one.
pub fn resolve_featurizer(
    spec: &FeatureSpec,
    pipeline: &TokenPipeline,
    embeddings: Option<&EmbeddingMatrix>,
) -> Result<Featurizer> {
    check("token pipeline", spec.pipeline_fingerprint(), &pipeline.fingerprint())?;
    match spec {
        FeatureSpec::Embedding { embeddings_digest, .. } => {
            let m = embeddings.ok_or_else(|| Error::Config("this model needs an embedding model".into()))?;
            check("embedding model", embeddings_digest, &m.digest())?;
            Ok(Featurizer::Embedding(m.clone()))
        }
        FeatureSpec::Tfidf { model, .. } => Ok(Featurizer::Tfidf(TfidfModel::from_json_value(model.clone())?)),
    }
}

/// Where features for a newly trained model come from.
pub enum FeatureSource<'a> {
    Embedding(&'a EmbeddingMatrix),
    Tfidf { min_df: u64 },
}

impl Default for FeatureSource<'_> {
    fn default() -> Self {
        FeatureSource::Tfidf { min_df: DEFAULT_MIN_DF }
    }
}

pub struct TrainOutcome {
    pub model: TrainedModel,
    pub loss_history: Vec<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
}

/// Labeled, unflagged items sorted by u_id.
fn labeled_items<'a>(
    tokens: &'a [TokenizedSpeech],
    labels: &BTreeMap<u64, usize>,
    restrict: Option<&[u64]>,
) -> Result<Vec<(&'a TokenizedSpeech, usize)>> {
    let by_id: HashMap<u64, &TokenizedSpeech> = tokens.iter().map(|t| (t.u_id, t)).collect();
    let ids: Vec<u64> = match restrict {
        Some(r) => r.to_vec(),
        None => labels.keys().copied().collect(),
    };
    let mut out = Vec::with_capacity(ids.len());
    let mut flagged = 0;
    for id in ids {
        let t = by_id
            .get(&id)
            .ok_or_else(|| Error::Validation(format!("labeled speech u_id {id} is missing from the tokens file")))?;
        let class = *labels
            .get(&id)
            .ok_or_else(|| Error::Validation(format!("speech u_id {id} has no label")))?;
        if t.short {
            flagged += 1;
            continue;
        }
        out.push((*t, class));
    }
    if flagged > 0 {
        log::warn!("{flagged} labeled speech(es) are flagged short and were left out");
    }
    Ok(out)
}

/// Splits the labeled items, fits the featurizer where it learns from data
/// (TF-IDF on the training part only) and trains the classifier.
pub fn train_task(
    task: Task,
    spec: &ModelSpec,
    tokens: &[TokenizedSpeech],
    labels: &BTreeMap<u64, usize>,
    source: FeatureSource<'_>,
    pipeline: &TokenPipeline,
    split: &SplitConfig,
) -> Result<TrainOutcome> {
    let items = labeled_items(tokens, labels, None)?;
    if items.is_empty() {
        return Err(Error::Validation("no labeled speeches to train on".into()));
    }
    let y: Vec<usize> = items.iter().map(|(_, c)| *c).collect();
    let (train_idx, test_idx) = split_indices(&y, split)?;
    let train_docs: Vec<&[String]> = train_idx.iter().map(|&i| items[i].0.tokens.as_slice()).collect();
    let (featurizer, features) = match source {
        FeatureSource::Embedding(m) => (
            Featurizer::Embedding(m.clone()),
            FeatureSpec::Embedding {
                pipeline_fingerprint: pipeline.fingerprint(),
                embeddings_digest: m.digest(),
            },
        ),
        FeatureSource::Tfidf { min_df } => {
            let t = TfidfModel::fit(&train_docs, min_df)?;
            let model = t.to_json_value();
            (
                Featurizer::Tfidf(t),
                FeatureSpec::Tfidf {
                    pipeline_fingerprint: pipeline.fingerprint(),
                    model,
                },
            )
        }
    };
    let (x, _) = featurizer.features(&train_docs)?;
    let data = Dataset::new(x, train_idx.iter().map(|&i| y[i]).collect(), task.label_names())?;
    let (mut model, loss_history) = train_with_history(&data, spec)?;
    let meta = ModelMetadata {
        task,
        features,
        split: split.clone(),
        train_u_ids: train_idx.iter().map(|&i| items[i].0.u_id).collect(),
        holdout_u_ids: test_idx.iter().map(|&i| items[i].0.u_id).collect(),
    };
    model.metadata = serde_json::to_value(&meta).expect("serializable");
    Ok(TrainOutcome {
        model,
        loss_history,
        n_train: train_idx.len(),
        n_holdout: test_idx.len(),
    })
}

/// Scores per document.
pub fn score_documents(model: &TrainedModel, featurizer: &Featurizer, docs: &[&[String]]) -> Result<Vec<Vec<f64>>> {
    let (x, _) = featurizer.features(docs)?;
    x.rows().map(|r| model.predict_scores(r)).collect()
}

/// Evaluates on the model's recorded holdout, or on every labeled item.
pub fn evaluate_task(
    model: &TrainedModel,
    featurizer: &Featurizer,
    tokens: &[TokenizedSpeech],
    labels: &BTreeMap<u64, usize>,
    all_labeled: bool,
) -> Result<EvalReport> {
    let meta = ModelMetadata::of(model)?;
    let restrict = (!all_labeled).then_some(meta.holdout_u_ids.as_slice());
    let items = labeled_items(tokens, labels, restrict)?;
    if items.is_empty() {
        return Err(Error::Validation("no labeled speeches to evaluate".into()));
    }
    let docs: Vec<&[String]> = items.iter().map(|(t, _)| t.tokens.as_slice()).collect();
    let scores = score_documents(model, featurizer, &docs)?;
    let y: Vec<usize> = items.iter().map(|(_, c)| *c).collect();
    evaluate(meta.task.name(), model.spec.family().name(), &model.label_names, &y, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::Family;
    use crate::preprocess::TokenPipelineConfig;

    fn tokens(rows: &[(u64, &str)]) -> Vec<TokenizedSpeech> {
        rows.iter()
            .map(|(id, t)| TokenizedSpeech {
                u_id: *id,
                tokens: t.split_whitespace().map(str::to_string).collect(),
                short: false,
            })
            .collect()
    }

    fn corpus() -> (Vec<TokenizedSpeech>, BTreeMap<u64, usize>) {
        let mut rows = Vec::new();
        let mut labels = BTreeMap::new();
        for i in 0..20u64 {
            let text = if i % 2 == 0 { "gut danke zustimmung gut" } else { "schlecht falsch versagen schlecht" };
            rows.push((i + 1, text));
            labels.insert(i + 1, (i % 2) as usize);
        }
        (tokens(&rows), labels)
    }

    #[test]
    fn sentiment_train_and_evaluate() {
        let (toks, labels) = corpus();
        let pipeline = TokenPipeline::new(TokenPipelineConfig::identity()).unwrap();
        let spec = ModelSpec::new(Family::Logreg, 1);
        let out = train_task(
            Task::Sentiment,
            &spec,
            &toks,
            &labels,
            FeatureSource::default(),
            &pipeline,
            &SplitConfig::default(),
        )
        .unwrap();
        assert_eq!((out.n_train, out.n_holdout), (16, 4));
        let meta = ModelMetadata::of(&out.model).unwrap();
        assert_eq!(meta.holdout_u_ids.len(), 4);
        let f = resolve_featurizer(&meta.features, &pipeline, None).unwrap();
        let report = evaluate_task(&out.model, &f, &toks, &labels, false).unwrap();
        assert_eq!(report.n_items, 4);
        assert_eq!(report.accuracy, 1.0);
        let all = evaluate_task(&out.model, &f, &toks, &labels, true).unwrap();
        assert_eq!(all.n_items, 20);
    }

    #[test]
    fn fingerprint_mismatch_is_hard_error() {
        let (toks, labels) = corpus();
        let pipeline = TokenPipeline::new(TokenPipelineConfig::identity()).unwrap();
        let out = train_task(
            Task::Sentiment,
            &ModelSpec::new(Family::Logreg, 1),
            &toks,
            &labels,
            FeatureSource::default(),
            &pipeline,
            &SplitConfig::default(),
        )
        .unwrap();
        let other = TokenPipeline::new(TokenPipelineConfig {
            lowercase: true,
            ..TokenPipelineConfig::identity()
        })
        .unwrap();
        let meta = ModelMetadata::of(&out.model).unwrap();
        assert!(matches!(
            resolve_featurizer(&meta.features, &other, None),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn missing_tokens_and_flagged_items() {
        let (mut toks, mut labels) = corpus();
        labels.insert(99, 0);
        let pipeline = TokenPipeline::new(TokenPipelineConfig::identity()).unwrap();
        let spec = ModelSpec::new(Family::Logreg, 1);
        let err = train_task(Task::Sentiment, &spec, &toks, &labels, FeatureSource::default(), &pipeline, &SplitConfig::default());
        assert!(err.err().expect("missing tokens").to_string().contains("99"));
        labels.remove(&99);
        toks[0].short = true;
        toks[1].short = true;
        let out = train_task(Task::Sentiment, &spec, &toks, &labels, FeatureSource::default(), &pipeline, &SplitConfig::default()).unwrap();
        assert_eq!(out.n_train + out.n_holdout, 18);
    }
}
