//! Corpus-wide prediction and the three trend tables: topic shares over time,
//! negative-speech share per party over time, and per-party topic sentiment
//! relative to the party's own baseline.

mod chart;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::write_atomic;
use crate::classifiers::{argmax, TrainedModel};
use crate::embeddings::EmbeddingMatrix;
use crate::labels::Task;
use crate::preprocess::TokenPipeline;
use crate::tasks::{resolve_featurizer, Featurizer, ModelMetadata};
use crate::{Error, Party, Result, Sentiment, Speech, Topic};

pub use chart::{render_svg, rolling_mean};

/// Party-period cells with fewer speeches than this are reported as null.
pub const DEFAULT_MIN_COUNT: u64 = 5;

const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub u_id: u64,
    pub topic: Topic,
    pub topic_scores: Vec<f64>,
    pub sentiment: Sentiment,
    /// Score of the positive class.
    pub sentiment_score: f64,
    pub party: Party,
    pub date: NaiveDate,
    /// No token of the speech was known to one of the featurizers.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oov: bool,
}

/// A trained task model with the featurizer and token pipeline it was
/// trained against.
pub struct Predictor {
    pub task: Task,
    model: TrainedModel,
    featurizer: Featurizer,
    pipeline: TokenPipeline,
}

impl Predictor {
    pub fn new(model: TrainedModel, pipeline: TokenPipeline, embeddings: Option<&EmbeddingMatrix>) -> Result<Self> {
        let meta = ModelMetadata::of(&model)?;
        let featurizer = resolve_featurizer(&meta.features, &pipeline, embeddings)?;
        Ok(Self {
            task: meta.task,
            model,
            featurizer,
            pipeline,
        })
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    fn score(&self, speeches: &[&Speech]) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
        let docs: Vec<Vec<String>> = speeches.iter().map(|s| self.pipeline.apply_text(&s.text)).collect();
        let refs: Vec<&[String]> = docs.iter().map(Vec::as_slice).collect();
        let (x, oov) = self.featurizer.features(&refs)?;
        let scores = x.rows().map(|r| self.model.predict_scores(r)).collect::<Result<_>>()?;
        Ok((scores, oov))
    }
}

fn expect_task(p: &Predictor, task: Task) -> Result<()> {
    if p.task != task {
        return Err(Error::Config(format!("expected a {task} model, got a {} model", p.task)));
    }
    Ok(())
}

/// One prediction per unflagged speech, in corpus order.
pub fn predict_corpus(speeches: &[Speech], topic: &Predictor, sentiment: &Predictor) -> Result<Vec<Prediction>> {
    expect_task(topic, Task::Topic)?;
    expect_task(sentiment, Task::Sentiment)?;
    let kept: Vec<&Speech> = speeches.iter().filter(|s| !s.short).collect();
    let chunks: Vec<Result<Vec<Prediction>>> = kept
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| {
            let (ts, toov) = topic.score(chunk)?;
            let (ss, soov) = sentiment.score(chunk)?;
            Ok(chunk
                .iter()
                .enumerate()
                .map(|(i, s)| Prediction {
                    u_id: s.u_id,
                    topic: Topic::from_index(argmax(&ts[i])).expect("topic class"),
                    topic_scores: ts[i].clone(),
                    sentiment: Sentiment::from_index(argmax(&ss[i])).expect("sentiment class"),
                    sentiment_score: ss[i][Sentiment::Positive.index()],
                    party: s.party,
                    date: s.date,
                    oov: toov[i] || soov[i],
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(kept.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Month,
    #[default]
    Quarter,
}

impl Granularity {
    /// Period label: `2021-03` or `2021-Q1`. Labels sort chronologically.
    pub fn period(self, date: NaiveDate) -> String {
        match self {
            Granularity::Month => format!("{:04}-{:02}", date.year(), date.month()),
            Granularity::Quarter => format!("{:04}-Q{}", date.year(), (date.month() - 1) / 3 + 1),
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "month" => Ok(Granularity::Month),
            "quarter" => Ok(Granularity::Quarter),
            _ => Err(Error::Config(format!("unknown granularity {s:?} (expected month or quarter)"))),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Month => "month",
            Granularity::Quarter => "quarter",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    TopicShare,
    NegativeShareByParty,
    SentimentDeviation,
}

impl TrendKind {
    pub const ALL: [TrendKind; 3] = [
        TrendKind::TopicShare,
        TrendKind::NegativeShareByParty,
        TrendKind::SentimentDeviation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrendKind::TopicShare => "topic_share",
            TrendKind::NegativeShareByParty => "negative_share_by_party",
            TrendKind::SentimentDeviation => "sentiment_deviation",
        }
    }
}

/// One cell. Which keys are set depends on the table kind; `value` is null
/// where the cell is too thin or empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub period: Option<String>,
    pub party: Option<Party>,
    pub topic: Option<Topic>,
    pub value: Option<f64>,
    /// Speeches in the cell.
    pub count: u64,
    /// Numerator behind `value`: speeches of the topic, or negative speeches.
    pub hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyBaseline {
    pub party: Party,
    pub negative_share: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendTable {
    pub kind: TrendKind,
    /// Unset for the deviation table, which pools all periods.
    pub granularity: Option<Granularity>,
    pub rows: Vec<TrendRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<PartyBaseline>,
}

fn share(hits: u64, count: u64) -> f64 {
    hits as f64 / count as f64
}

/// Every period present gets one row per topic; zero-speech periods do not
/// appear.
pub fn topic_share_over_time(preds: &[Prediction], granularity: Granularity) -> TrendTable {
    let mut counts: BTreeMap<String, [u64; 6]> = BTreeMap::new();
    for p in preds {
        counts.entry(granularity.period(p.date)).or_default()[p.topic.index()] += 1;
    }
    let mut rows = Vec::with_capacity(counts.len() * Topic::ALL.len());
    for (period, c) in counts {
        let total: u64 = c.iter().sum();
        for t in Topic::ALL {
            rows.push(TrendRow {
                period: Some(period.clone()),
                party: None,
                topic: Some(t),
                value: Some(share(c[t.index()], total)),
                count: total,
                hits: c[t.index()],
            });
        }
    }
    TrendTable {
        kind: TrendKind::TopicShare,
        granularity: Some(granularity),
        rows,
        baselines: Vec::new(),
    }
}

/// (total, negative) per key, Unknown party excluded.
fn negative_counts<K: Ord>(preds: &[Prediction], key: impl Fn(&Prediction) -> K) -> BTreeMap<K, (u64, u64)> {
    let mut m: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for p in preds.iter().filter(|p| p.party != Party::Unknown) {
        let e = m.entry(key(p)).or_default();
        e.0 += 1;
        e.1 += u64::from(p.sentiment == Sentiment::Negative);
    }
    m
}

/// Rows for every (period, party) with at least one speech; the share is null
/// below `min_count` speeches.
pub fn negative_share_by_party(preds: &[Prediction], granularity: Granularity, min_count: u64) -> TrendTable {
    let counts = negative_counts(preds, |p| (granularity.period(p.date), p.party));
    let rows = counts
        .into_iter()
        .map(|((period, party), (n, neg))| TrendRow {
            period: Some(period),
            party: Some(party),
            topic: None,
            value: (n >= min_count).then(|| share(neg, n)),
            count: n,
            hits: neg,
        })
        .collect();
    TrendTable {
        kind: TrendKind::NegativeShareByParty,
        granularity: Some(granularity),
        rows,
        baselines: Vec::new(),
    }
}

/// Every party present gets one row per topic: its negative share on the topic
/// minus its overall negative share, null where the party never spoke on it.
pub fn sentiment_deviation_by_topic(preds: &[Prediction]) -> TrendTable {
    let overall = negative_counts(preds, |p| p.party);
    let cells = negative_counts(preds, |p| (p.party, p.topic));
    let mut rows = Vec::new();
    let mut baselines = Vec::new();
    for (&party, &(n, neg)) in &overall {
        let base = share(neg, n);
        baselines.push(PartyBaseline {
            party,
            negative_share: base,
            count: n,
        });
        for t in Topic::ALL {
            let (cn, cneg) = cells.get(&(party, t)).copied().unwrap_or((0, 0));
            rows.push(TrendRow {
                period: None,
                party: Some(party),
                topic: Some(t),
                value: (cn > 0).then(|| share(cneg, cn) - base),
                count: cn,
                hits: cneg,
            });
        }
    }
    TrendTable {
        kind: TrendKind::SentimentDeviation,
        granularity: None,
        rows,
        baselines,
    }
}

/// All three tables with default settings for the given granularity.
pub fn all_tables(preds: &[Prediction], granularity: Granularity, min_count: u64) -> Vec<TrendTable> {
    vec![
        topic_share_over_time(preds, granularity),
        negative_share_by_party(preds, granularity, min_count),
        sentiment_deviation_by_topic(preds),
    ]
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrendTable {
    /// RFC 4180 CSV with a header row; nulls are empty fields.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self.kind {
            TrendKind::TopicShare => {
                w.write_record(["period", "topic", "share", "topic_count", "period_count"])?;
                for r in &self.rows {
                    w.write_record([
                        r.period.clone().unwrap_or_default(),
                        r.topic.map(|t| t.name().to_string()).unwrap_or_default(),
                        fmt_opt(r.value),
                        r.hits.to_string(),
                        r.count.to_string(),
                    ])?;
                }
            }
            TrendKind::NegativeShareByParty => {
                w.write_record(["period", "party", "negative_share", "negative_count", "count"])?;
                for r in &self.rows {
                    w.write_record([
                        r.period.clone().unwrap_or_default(),
                        r.party.map(|p| p.name().to_string()).unwrap_or_default(),
                        fmt_opt(r.value),
                        r.hits.to_string(),
                        r.count.to_string(),
                    ])?;
                }
            }
            TrendKind::SentimentDeviation => {
                let base: BTreeMap<Party, &PartyBaseline> = self.baselines.iter().map(|b| (b.party, b)).collect();
                w.write_record([
                    "party",
                    "topic",
                    "deviation",
                    "negative_count",
                    "count",
                    "party_baseline",
                    "party_count",
                ])?;
                for r in &self.rows {
                    let b = r.party.and_then(|p| base.get(&p));
                    w.write_record([
                        r.party.map(|p| p.name().to_string()).unwrap_or_default(),
                        r.topic.map(|t| t.name().to_string()).unwrap_or_default(),
                        fmt_opt(r.value),
                        r.hits.to_string(),
                        r.count.to_string(),
                        fmt_opt(b.map(|b| b.negative_share)),
                        b.map(|b| b.count.to_string()).unwrap_or_default(),
                    ])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Writes `<kind>.csv` and `<kind>.svg` into `dir`; returns both paths.
    pub fn write(&self, dir: &Path, smooth: bool) -> Result<(PathBuf, PathBuf)> {
        let csv_path = dir.join(format!("{}.csv", self.kind.name()));
        let svg_path = dir.join(format!("{}.svg", self.kind.name()));
        write_atomic(&csv_path, self.to_csv()?.as_bytes())?;
        write_atomic(&svg_path, render_svg(self, smooth).as_bytes())?;
        Ok((csv_path, svg_path))
    }
}

#[cfg(test)]
mod tests;
