//! Unigram TF-IDF with smoothed idf and L2 normalization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{read_json, write_json_pretty};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MIN_DF: u64 = 2;

/// Sparse row with strictly increasing indices and non-zero finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }
}

/// `ln((1 + n_docs) / (1 + doc_freq)) + 1`
pub fn smoothed_idf(n_docs: u64, doc_freq: u64) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + doc_freq as f64)).ln() + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<u64>,
    idf: Vec<f64>,
    n_docs: u64,
    min_df: u64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    min_df: u64,
    n_docs: u64,
    vocab: Vec<String>,
    doc_freq: Vec<u64>,
}

impl TfidfModel {
    /// Fits document frequencies; vocabulary ordered by descending df, ties
    /// lexicographic.
    pub fn fit<D: AsRef<[String]>>(docs: &[D], min_df: u64) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Config("tf-idf: no training documents".into()));
        }
        let mut df: HashMap<&str, u64> = HashMap::new();
        for d in docs {
            let unique: HashSet<&str> = d.as_ref().iter().map(String::as_str).collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = df.into_iter().filter(|&(_, c)| c >= min_df).collect();
        if kept.is_empty() {
            return Err(Error::Config(format!("tf-idf: vocabulary empty after min_df={min_df} filtering")));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let (vocab, doc_freq) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
        Self::from_parts(vocab, doc_freq, docs.len() as u64, min_df)
    }

    fn from_parts(vocab: Vec<String>, doc_freq: Vec<u64>, n_docs: u64, min_df: u64) -> Result<Self> {
        if vocab.len() != doc_freq.len() {
            return Err(Error::Validation("tf-idf: vocab and doc_freq lengths differ".into()));
        }
        if let Some(&bad) = doc_freq.iter().find(|&&d| d < min_df.max(1) || d > n_docs) {
            return Err(Error::Validation(format!("tf-idf: doc_freq {bad} outside [min_df, n_docs]")));
        }
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(Error::Validation("tf-idf: duplicate vocabulary entry".into()));
        }
        let idf = doc_freq.iter().map(|&d| smoothed_idf(n_docs, d)).collect();
        Ok(Self {
            vocab,
            index,
            doc_freq,
            idf,
            n_docs,
            min_df,
        })
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn doc_freq(&self) -> &[u64] {
        &self.doc_freq
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn min_df(&self) -> u64 {
        self.min_df
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Raw counts times idf, L2-normalized. Out-of-vocabulary tokens are
    /// ignored; a document without vocabulary tokens maps to the zero vector.
    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
        for t in tokens {
            if let Some(i) = self.index_of(t) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let weighted: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, c)| (i as u32, c as f64 * self.idf[i]))
            .collect();
        let norm = weighted.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return SparseVector::zero(self.dim());
        }
        let (indices, values) = weighted.into_iter().map(|(i, v)| (i, v / norm)).unzip();
        SparseVector {
            dim: self.dim(),
            indices,
            values,
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_file()).expect("serializable")
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        let file: ModelFile = serde_json::from_value(v).map_err(|e| Error::json("tf-idf model", e))?;
        Self::from_file(file)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            min_df: self.min_df,
            n_docs: self.n_docs,
            vocab: self.vocab.clone(),
            doc_freq: self.doc_freq.clone(),
        }
    }

    fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "tf-idf model".into(),
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        Self::from_parts(file.vocab, file.doc_freq, file.n_docs, file.min_df)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_pretty(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(read_json(path)?)
    }
}
