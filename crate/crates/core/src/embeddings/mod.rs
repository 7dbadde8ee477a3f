//! Skip-gram token embeddings trained with negative sampling, and document
//! vectors built from them.

mod sgns;

use std::cell::Cell;
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use sgns::{sgns_loss_and_gradients, SgnsGradients};
pub(crate) use sgns::{neg_log_sigmoid, sigmoid};

use crate::artifact::{read_json, write_atomic};
use crate::{Error, Result};
use sgns::{sgd_pair, ParamStore};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Attempts to draw a negative different from the context token before the
/// negative is skipped.
const NEGATIVE_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub initial_lr: f64,
    /// Frequent-token subsampling threshold; 0 disables subsampling.
    pub subsample_threshold: f64,
    pub seed: u64,
    /// 1 = deterministic single-thread training. More workers update the
    /// shared matrices without synchronization and are not reproducible.
    pub workers: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            initial_lr: 0.025,
            subsample_threshold: 1e-3,
            seed: 0,
            workers: 1,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("embedding config: {m}")));
        if self.dim < 2 {
            return bad("dim must be >= 2");
        }
        if self.window < 1 {
            return bad("window must be >= 1");
        }
        if self.negatives < 1 {
            return bad("negatives must be >= 1");
        }
        if self.min_count < 1 {
            return bad("min_count must be >= 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.subsample_threshold >= 0.0) {
            return bad("subsample_threshold must be >= 0");
        }
        if self.workers < 1 {
            return bad("workers must be >= 1");
        }
        Ok(())
    }
}

/// Token inventory ordered by descending frequency, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, counts, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, token: &str) -> Option<u64> {
        self.index_of(token).map(|i| self.counts[i])
    }
}

/// Counts tokens and keeps those with `count >= min_count`.
pub fn build_vocab<D: AsRef<[String]>>(docs: &[D], min_count: u64) -> Result<Vocab> {
    if docs.iter().all(|d| d.as_ref().is_empty()) {
        return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for d in docs {
        for t in d.as_ref() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::Config(format!("no token occurs at least min_count={min_count} times")));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (tokens, counts) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Ok(Vocab::from_parts(tokens, counts))
}

/// Learned input ("word") and output ("context") vectors, row-major |V|×dim.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub vocab: Vocab,
    pub input_vectors: Vec<f64>,
    pub output_vectors: Vec<f64>,
    pub config: EmbeddingConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    config: EmbeddingConfig,
    vocab: Vec<String>,
    counts: Vec<u64>,
    input_vectors: Vec<Vec<f64>>,
    output_vectors: Vec<Vec<f64>>,
}

fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

impl EmbeddingMatrix {
    /// Seeded starting point: input vectors uniform in ±0.5/dim, output
    /// vectors zero.
    pub fn initialize(vocab: Vocab, config: &EmbeddingConfig) -> Self {
        let dim = config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0]));
        let half = 0.5 / dim as f64;
        let input_vectors = (0..vocab.len() * dim)
            .map(|_| rng.random_range(-half..half))
            .collect();
        let output_vectors = vec![0.0; vocab.len() * dim];
        Self {
            vocab,
            input_vectors,
            output_vectors,
            config: config.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.input_vectors[i * d..(i + 1) * d]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.output_vectors[i * d..(i + 1) * d]
    }

    /// Input vector of a token, if in vocabulary.
    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.vocab.index_of(token).map(|i| self.input_row(i))
    }

    /// One SGD step on the pair (`center`, `context`) with the given negative
    /// rows. Returns the pair loss before the step.
    pub fn apply_pair_update(&mut self, center: usize, context: usize, negatives: &[usize], lr: f64) -> f64 {
        let dim = self.dim();
        let (mut v, mut g) = (vec![0.0; dim], vec![0.0; dim]);
        let input = Cell::from_mut(&mut self.input_vectors[..]).as_slice_of_cells();
        let output = Cell::from_mut(&mut self.output_vectors[..]).as_slice_of_cells();
        sgd_pair(input, output, dim, center, context, negatives, lr, &mut v, &mut g)
    }

    pub fn is_finite(&self) -> bool {
        self.input_vectors.iter().chain(&self.output_vectors).all(|x| x.is_finite())
    }

    /// Content hash over config, vocabulary and both matrices.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_string(&self.config).expect("serializable"));
        for (t, c) in self.vocab.tokens.iter().zip(&self.vocab.counts) {
            h.update(t.as_bytes());
            h.update([0]);
            h.update(c.to_le_bytes());
        }
        for x in self.input_vectors.iter().chain(&self.output_vectors) {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> String {
        let d = self.dim();
        let rows = |m: &[f64]| m.chunks(d).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.tokens.clone(),
            counts: self.vocab.counts.clone(),
            input_vectors: rows(&self.input_vectors),
            output_vectors: rows(&self.output_vectors),
        };
        serde_json::to_string(&file).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::json("embedding model", e))?;
        Self::from_file(file)
    }

    fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "embedding model".into(),
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let n = file.vocab.len();
        let d = file.config.dim;
        let shape_ok = |m: &[Vec<f64>]| m.len() == n && m.iter().all(|r| r.len() == d);
        if file.counts.len() != n || !shape_ok(&file.input_vectors) || !shape_ok(&file.output_vectors) {
            return Err(Error::Validation("embedding model: matrix shape does not match vocabulary".into()));
        }
        let m = Self {
            vocab: Vocab::from_parts(file.vocab, file.counts),
            input_vectors: file.input_vectors.concat(),
            output_vectors: file.output_vectors.concat(),
            config: file.config,
        };
        if !m.is_finite() {
            return Err(Error::Validation("embedding model contains non-finite values".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(read_json(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStats {
    /// Mean pair loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub total_pairs: u64,
}

struct Corpus {
    docs: Vec<Vec<u32>>,
    keep_prob: Vec<f64>,
    window: usize,
}

impl Corpus {
    /// Subsampled token sequence and per-position window radius of one doc.
    fn plan(&self, doc: &[u32], rng: &mut ChaCha8Rng, kept: &mut Vec<u32>, radii: &mut Vec<usize>) {
        kept.clear();
        radii.clear();
        for &t in doc {
            let p = self.keep_prob[t as usize];
            if p >= 1.0 || p >= rng.random::<f64>() {
                kept.push(t);
            }
        }
        for _ in 0..kept.len() {
            radii.push(rng.random_range(1..=self.window));
        }
    }
}

fn pair_count(len: usize, radii: &[usize]) -> u64 {
    radii
        .iter()
        .enumerate()
        .map(|(pos, &b)| (b.min(pos) + b.min(len - 1 - pos)) as u64)
        .sum()
}

struct Schedule {
    initial_lr: f64,
    total_pairs: u64,
    processed: AtomicU64,
}

impl Schedule {
    /// Linear decay from the initial rate to initial/10 000 over all pairs.
    fn next_lr(&self) -> f64 {
        let k = self.processed.fetch_add(1, Ordering::Relaxed);
        let frac = 1.0 - k as f64 / self.total_pairs.max(1) as f64;
        self.initial_lr * frac.max(1e-4)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_shard<S: ParamStore + ?Sized>(
    corpus: &Corpus,
    docs: &[Vec<u32>],
    cfg: &EmbeddingConfig,
    epoch: usize,
    shard: usize,
    negative_table: &WeightedAliasIndex<f64>,
    schedule: &Schedule,
    input: &S,
    output: &S,
) -> Result<(f64, u64)> {
    let dim = cfg.dim;
    let mut plan_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, epoch as u64, shard as u64]));
    let mut neg_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2, epoch as u64, shard as u64]));
    let (mut kept, mut radii) = (Vec::new(), Vec::new());
    let mut negs = Vec::with_capacity(cfg.negatives);
    let (mut v, mut g) = (vec![0.0; dim], vec![0.0; dim]);
    let (mut loss_sum, mut pairs) = (0.0, 0u64);
    for doc in docs {
        corpus.plan(doc, &mut plan_rng, &mut kept, &mut radii);
        for (pos, &center) in kept.iter().enumerate() {
            let b = radii[pos];
            let lo = pos.saturating_sub(b);
            let hi = (pos + b).min(kept.len() - 1);
            for (cpos, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                if cpos == pos {
                    continue;
                }
                negs.clear();
                for _ in 0..cfg.negatives {
                    for _ in 0..NEGATIVE_REDRAWS {
                        let n = negative_table.sample(&mut neg_rng) as u32;
                        if n != context {
                            negs.push(n as usize);
                            break;
                        }
                    }
                }
                let lr = schedule.next_lr();
                let loss = sgd_pair(
                    input,
                    output,
                    dim,
                    center as usize,
                    context as usize,
                    &negs,
                    lr,
                    &mut v,
                    &mut g,
                );
                if !loss.is_finite() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "non-finite loss in epoch {epoch} at center token #{center} (lr {lr:.3e}); \
                         lower initial_lr"
                    )));
                }
                loss_sum += loss;
                pairs += 1;
            }
        }
    }
    Ok((loss_sum, pairs))
}

/// Trains skip-gram embeddings; see [`train_skipgram_with_stats`].
pub fn train_skipgram<D: AsRef<[String]>>(docs: &[D], cfg: &EmbeddingConfig) -> Result<EmbeddingMatrix> {
    train_skipgram_with_stats(docs, cfg).map(|(m, _)| m)
}

/// Trains skip-gram embeddings with negative sampling.
///
/// Every (center, context) pair inside a per-position window of radius drawn
/// uniformly from `1..=window` gets one SGD step. Negatives come from the
/// unigram distribution raised to 3/4. The learning rate decays linearly over
/// the exact number of pairs of the whole run, which is known up front
/// because subsampling and window draws come from per-epoch seeded streams.
pub fn train_skipgram_with_stats<D: AsRef<[String]>>(
    docs: &[D],
    cfg: &EmbeddingConfig,
) -> Result<(EmbeddingMatrix, TrainingStats)> {
    cfg.validate()?;
    let vocab = build_vocab(docs, cfg.min_count)?;
    let total_words: u64 = vocab.counts().iter().sum();
    let keep_prob = vocab
        .counts()
        .iter()
        .map(|&c| {
            if cfg.subsample_threshold <= 0.0 {
                1.0
            } else {
                let tf = cfg.subsample_threshold * total_words as f64;
                ((c as f64 / tf).sqrt() + 1.0) * tf / c as f64
            }
        })
        .collect();
    let corpus = Corpus {
        docs: docs
            .iter()
            .map(|d| d.as_ref().iter().filter_map(|t| vocab.index_of(t).map(|i| i as u32)).collect())
            .filter(|d: &Vec<u32>| !d.is_empty())
            .collect(),
        keep_prob,
        window: cfg.window,
    };
    let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(0.75)).collect();
    let negative_table = WeightedAliasIndex::new(weights)
        .map_err(|e| Error::Config(format!("negative sampling table: {e}")))?;

    let workers = cfg.workers.min(corpus.docs.len()).max(1);
    let chunk = corpus.docs.len().div_ceil(workers);
    let shards: Vec<&[Vec<u32>]> = corpus.docs.chunks(chunk.max(1)).collect();

    // exact pair count, replaying the same planning streams training will use
    let mut total_pairs = 0u64;
    let (mut kept, mut radii) = (Vec::new(), Vec::new());
    for epoch in 0..cfg.epochs {
        for (shard, docs) in shards.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, epoch as u64, shard as u64]));
            for doc in *docs {
                corpus.plan(doc, &mut rng, &mut kept, &mut radii);
                total_pairs += pair_count(kept.len(), &radii);
            }
        }
    }
    let schedule = Schedule {
        initial_lr: cfg.initial_lr,
        total_pairs,
        processed: AtomicU64::new(0),
    };

    let mut m = EmbeddingMatrix::initialize(vocab, cfg);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    if shards.len() == 1 {
        let input = Cell::from_mut(&mut m.input_vectors[..]).as_slice_of_cells();
        let output = Cell::from_mut(&mut m.output_vectors[..]).as_slice_of_cells();
        for epoch in 0..cfg.epochs {
            let (loss, pairs) =
                run_shard(&corpus, shards[0], cfg, epoch, 0, &negative_table, &schedule, input, output)?;
            epoch_losses.push(loss / pairs.max(1) as f64);
        }
    } else {
        let to_atomic = |v: &[f64]| v.iter().map(|x| AtomicU64::new(x.to_bits())).collect::<Vec<_>>();
        let input = to_atomic(&m.input_vectors);
        let output = to_atomic(&m.output_vectors);
        for epoch in 0..cfg.epochs {
            let results: Vec<Result<(f64, u64)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = shards
                    .iter()
                    .enumerate()
                    .map(|(shard, docs)| {
                        let (corpus, table, schedule) = (&corpus, &negative_table, &schedule);
                        let (input, output) = (&input[..], &output[..]);
                        scope.spawn(move || {
                            run_shard(corpus, docs, cfg, epoch, shard, table, schedule, input, output)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
            });
            let (mut loss, mut pairs) = (0.0, 0u64);
            for r in results {
                let (l, p) = r?;
                loss += l;
                pairs += p;
            }
            epoch_losses.push(loss / pairs.max(1) as f64);
        }
        let from_atomic = |v: Vec<AtomicU64>| v.into_iter().map(|a| f64::from_bits(a.into_inner())).collect();
        m.input_vectors = from_atomic(input);
        m.output_vectors = from_atomic(output);
    }
    if !m.is_finite() {
        return Err(Error::Numerical("embedding matrix contains non-finite values after training".into()));
    }
    Ok((
        m,
        TrainingStats {
            epoch_losses,
            total_pairs,
        },
    ))
}

/// Mean input vector of a document's in-vocabulary tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub values: Vec<f64>,
    /// No token was in vocabulary; `values` is the zero vector.
    pub oov: bool,
}

pub fn embed_document(tokens: &[String], m: &EmbeddingMatrix) -> DocVector {
    embed_document_weighted(tokens, m, |_| 1.0)
}

/// Weighted mean of input vectors, e.g. with idf weights. Tokens with zero
/// weight are ignored.
pub fn embed_document_weighted(tokens: &[String], m: &EmbeddingMatrix, weight: impl Fn(&str) -> f64) -> DocVector {
    let dim = m.dim();
    let mut values = vec![0.0; dim];
    let mut total = 0.0;
    for t in tokens {
        if let Some(i) = m.vocab.index_of(t) {
            let w = weight(t);
            if w == 0.0 {
                continue;
            }
            for (acc, x) in values.iter_mut().zip(m.input_row(i)) {
                *acc += w * x;
            }
            total += w;
        }
    }
    if total == 0.0 {
        return DocVector {
            values: vec![0.0; dim],
            oov: true,
        };
    }
    for v in &mut values {
        *v /= total;
    }
    DocVector { values, oov: false }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests;
