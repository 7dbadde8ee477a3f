//! Token pipeline: tokenize → lowercase → noise-strip → lemmatize → stopword removal.
//!
//! Each stage is switched by [`TokenPipelineConfig`]. The stage order is fixed:
//! stopword removal always sees lemmatized, lowercased forms.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::sha256_hex;
use crate::speech::Speech;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPipelineConfig {
    pub lowercase: bool,
    /// Drop purely numeric/punctuation tokens and bracketed stage directions.
    pub strip_noise: bool,
    pub remove_stopwords: bool,
    pub lemmatize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopword_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma_table_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Topic,
    Sentiment,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topic" => Ok(Preset::Topic),
            "sentiment" => Ok(Preset::Sentiment),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected topic|sentiment)"))),
        }
    }
}

impl TokenPipelineConfig {
    /// Every stage off: output equals [`tokenize`].
    pub fn identity() -> Self {
        Self {
            lowercase: false,
            strip_noise: false,
            remove_stopwords: false,
            lemmatize: false,
            stopword_file: None,
            lemma_table_file: None,
        }
    }

    /// Topic classification: all stages on, resources from `resources_dir`.
    pub fn topic(resources_dir: &Path) -> Self {
        Self {
            lowercase: true,
            strip_noise: true,
            remove_stopwords: true,
            lemmatize: true,
            stopword_file: Some(resources_dir.join("stopwords.txt")),
            lemma_table_file: Some(resources_dir.join("lemmas.tsv")),
        }
    }

    /// Sentiment classification keeps stopwords and surface forms.
    pub fn sentiment(_resources_dir: &Path) -> Self {
        Self {
            lowercase: true,
            strip_noise: true,
            remove_stopwords: false,
            lemmatize: false,
            stopword_file: None,
            lemma_table_file: None,
        }
    }

    pub fn preset(preset: Preset, resources_dir: &Path) -> Self {
        match preset {
            Preset::Topic => Self::topic(resources_dir),
            Preset::Sentiment => Self::sentiment(resources_dir),
        }
    }
}

/// Speech id plus its processed tokens; one JSON line in a tokens file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSpeech {
    pub u_id: u64,
    pub tokens: Vec<String>,
    /// Copied from the speech; flagged items are kept out of training and
    /// prediction.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub short: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Word(String),
    Open,
    Close,
}

fn is_open(c: char) -> bool {
    matches!(c, '(' | '[' | '{')
}

fn is_close(c: char) -> bool {
    matches!(c, ')' | ']' | '}')
}

/// Splits into words and bracket markers. A hyphen stays inside a word only
/// when both neighbours are alphanumeric.
fn scan(text: &str) -> Vec<Piece> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if c == '-'
            && !word.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(Piece::Word(std::mem::take(&mut word)));
        }
        if is_open(c) {
            out.push(Piece::Open);
        } else if is_close(c) {
            out.push(Piece::Close);
        }
    }
    if !word.is_empty() {
        out.push(Piece::Word(word));
    }
    out
}

/// Splits on whitespace and punctuation, keeping intra-word hyphens and all
/// letters (umlauts and ß included). Never yields an empty token.
pub fn tokenize(text: &str) -> Vec<String> {
    scan(text)
        .into_iter()
        .filter_map(|p| match p {
            Piece::Word(w) => Some(w),
            _ => None,
        })
        .collect()
}

fn is_noise_token(token: &str) -> bool {
    token.chars().all(|c| !c.is_alphabetic())
}

/// Removes the contents of every matched bracket pair (nested pairs included).
/// Unmatched brackets are dropped without touching surrounding words.
fn drop_bracketed(pieces: Vec<Piece>) -> Vec<Piece> {
    let mut inside = vec![false; pieces.len()];
    let mut stack = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        match p {
            Piece::Open => stack.push(i),
            Piece::Close => {
                if let Some(open) = stack.pop() {
                    for flag in &mut inside[open..=i] {
                        *flag = true;
                    }
                }
            }
            Piece::Word(_) => {}
        }
    }
    pieces
        .into_iter()
        .zip(inside)
        .filter(|(_, inside)| !inside)
        .map(|(p, _)| p)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("stopword file {}: {e}", path.display())))?;
    Ok(parse_stopwords(&text))
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_lemmas(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("lemma table {}: {e}", path.display())))?;
    parse_lemmas(&text)
}

pub fn parse_lemmas(text: &str) -> Result<HashMap<String, String>> {
    let mut table = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (token, lemma) = line
            .split_once('\t')
            .ok_or_else(|| Error::Config(format!("lemma table line {}: expected token<TAB>lemma", n + 1)))?;
        let (token, lemma) = (token.trim(), lemma.trim());
        if token.is_empty() || lemma.is_empty() || lemma.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("lemma table line {}: empty or multi-word entry", n + 1)));
        }
        table.insert(token.to_lowercase(), lemma.to_lowercase());
    }
    Ok(table)
}

/// A configured pipeline with its resources loaded.
#[derive(Debug, Clone)]
pub struct TokenPipeline {
    config: TokenPipelineConfig,
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
}

impl TokenPipeline {
    /// Loads the resources the enabled stages need; fails before any text is
    /// processed if one is missing.
    pub fn new(config: TokenPipelineConfig) -> Result<Self> {
        let stopwords = if config.remove_stopwords {
            let path = config
                .stopword_file
                .as_deref()
                .ok_or_else(|| Error::Config("remove_stopwords set but no stopword_file".into()))?;
            load_stopwords(path)?
        } else {
            HashSet::new()
        };
        let lemmas = if config.lemmatize {
            let path = config
                .lemma_table_file
                .as_deref()
                .ok_or_else(|| Error::Config("lemmatize set but no lemma_table_file".into()))?;
            load_lemmas(path)?
        } else {
            HashMap::new()
        };
        Ok(Self {
            config,
            stopwords,
            lemmas,
        })
    }

    /// Builds a pipeline from in-memory resources (file paths in `config` are ignored).
    pub fn from_parts(
        config: TokenPipelineConfig,
        stopwords: HashSet<String>,
        lemmas: HashMap<String, String>,
    ) -> Self {
        Self {
            config,
            stopwords,
            lemmas,
        }
    }

    pub fn config(&self) -> &TokenPipelineConfig {
        &self.config
    }

    /// Hash of the stage switches and the effective resource contents. Two
    /// pipelines with equal fingerprints produce identical tokens.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            lowercase: bool,
            strip_noise: bool,
            remove_stopwords: bool,
            lemmatize: bool,
            stopwords: BTreeSet<&'a str>,
            lemmas: BTreeMap<&'a str, &'a str>,
        }
        let c = &self.config;
        let canonical = Canonical {
            lowercase: c.lowercase,
            strip_noise: c.strip_noise,
            remove_stopwords: c.remove_stopwords,
            lemmatize: c.lemmatize,
            stopwords: if c.remove_stopwords {
                self.stopwords.iter().map(String::as_str).collect()
            } else {
                BTreeSet::new()
            },
            lemmas: if c.lemmatize {
                self.lemmas.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
            } else {
                BTreeMap::new()
            },
        };
        sha256_hex(serde_json::to_string(&canonical).expect("serializable").as_bytes())
    }

    pub fn apply_text(&self, text: &str) -> Vec<String> {
        let c = &self.config;
        let mut pieces = scan(text);
        if c.lowercase {
            for p in &mut pieces {
                if let Piece::Word(w) = p {
                    *w = w.to_lowercase();
                }
            }
        }
        if c.strip_noise {
            pieces = drop_bracketed(pieces);
        }
        let mut tokens: Vec<String> = pieces
            .into_iter()
            .filter_map(|p| match p {
                Piece::Word(w) => Some(w),
                _ => None,
            })
            .collect();
        if c.strip_noise {
            tokens.retain(|t| !is_noise_token(t));
        }
        if c.lemmatize {
            for t in &mut tokens {
                if let Some(lemma) = self.lemmas.get(&t.to_lowercase()) {
                    *t = lemma.clone();
                }
            }
        }
        if c.remove_stopwords {
            tokens.retain(|t| !self.stopwords.contains(&t.to_lowercase()));
        }
        tokens
    }

    pub fn apply(&self, speech: &Speech) -> TokenizedSpeech {
        TokenizedSpeech {
            u_id: speech.u_id,
            tokens: self.apply_text(&speech.text),
            short: speech.short,
        }
    }
}

/// Free-function form of [`TokenPipeline::apply`].
pub fn apply_pipeline(speech: &Speech, pipeline: &TokenPipeline) -> TokenizedSpeech {
    pipeline.apply(speech)
}
