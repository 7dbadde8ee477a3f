//! Run configuration: one JSON file whose values command-line flags override.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use chrono::NaiveDate;
use plenar_core::classifiers::{Family, Hyperparameters, ModelSpec};
use plenar_core::embeddings::EmbeddingConfig;
use plenar_core::eval::SplitConfig;
use plenar_core::labels::Task;
use plenar_core::tfidf::DEFAULT_MIN_DF;
use plenar_core::trends::{Granularity, DEFAULT_MIN_COUNT};
use plenar_ingest::ClientConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

/// Resources shipped with the source tree; overridable for installed binaries.
pub fn bundled_resources() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../resources")
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub cache: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub resources: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub workers: usize,
    pub timeout_secs: u64,
    pub client: ClientConfig,
    /// Used when `DIP_API_KEY` is unset. Never written to artifacts.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for IngestSettings {
    fn default() -> Self {
        Self {
            workers: 1,
            timeout_secs: 60,
            client: ClientConfig::default(),
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Embedding,
    Tfidf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskModel {
    pub features: FeatureKind,
    /// Family and its hyperparameters; family defaults when only the family
    /// is given on the command line.
    #[serde(flatten)]
    pub hyper: Hyperparameters,
}

impl TaskModel {
    pub fn default_for(task: Task) -> Self {
        let (family, features) = match task {
            Task::Topic => (Family::BaggingSvm, FeatureKind::Embedding),
            Task::Sentiment => (Family::RandomForest, FeatureKind::Tfidf),
        };
        Self {
            features,
            hyper: ModelSpec::new(family, 0).hyper,
        }
    }

    pub fn spec(&self, seed: u64) -> ModelSpec {
        ModelSpec {
            hyper: self.hyper.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub topic: Option<TaskModel>,
    pub sentiment: Option<TaskModel>,
}

impl ModelSettings {
    pub fn for_task(&self, task: Task) -> TaskModel {
        match task {
            Task::Topic => self.topic.clone(),
            Task::Sentiment => self.sentiment.clone(),
        }
        .unwrap_or_else(|| TaskModel::default_for(task))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendSettings {
    pub granularity: Granularity,
    pub min_count: u64,
    pub smooth: bool,
}

impl Default for TrendSettings {
    fn default() -> Self {
        Self {
            granularity: Granularity::Quarter,
            min_count: DEFAULT_MIN_COUNT,
            smooth: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub seed: Option<u64>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub ingest: IngestSettings,
    pub embedding: Option<EmbeddingConfig>,
    pub models: ModelSettings,
    pub split: SplitConfig,
    pub tfidf_min_df: u64,
    pub trends: TrendSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            seed: None,
            from: None,
            to: None,
            ingest: IngestSettings::default(),
            embedding: None,
            models: ModelSettings::default(),
            split: SplitConfig::default(),
            tfidf_min_df: DEFAULT_MIN_DF,
            trends: TrendSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Effective settings shared by every subcommand.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub offline: bool,
    pub resources: PathBuf,
}

impl Context {
    pub fn new(config: RunConfig, seed_flag: Option<u64>, offline: bool, resources_flag: Option<PathBuf>) -> anyhow::Result<Self> {
        let seed = seed_flag.or(config.seed).unwrap_or(DEFAULT_SEED);
        let resources = resources_flag
            .or_else(|| config.paths.resources.clone())
            .unwrap_or_else(bundled_resources);
        if !resources.is_dir() {
            bail!("resources directory {} does not exist", resources.display());
        }
        let resources = std::fs::canonicalize(&resources).with_context(|| format!("resolving {}", resources.display()))?;
        Ok(Self {
            config,
            seed,
            offline,
            resources,
        })
    }

    pub fn fixture_protocols(&self) -> PathBuf {
        self.resources.join("fixtures/protocols")
    }

    pub fn fixture_labels(&self, task: Task) -> PathBuf {
        self.resources.join(format!("fixtures/labels/{}.jsonl", task.name()))
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            seed: self.seed,
            ..self.config.split.clone()
        }
    }

    /// Flag value, else config value, else an error naming both.
    pub fn path_or(&self, flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
        flag.or_else(|| configured.clone())
            .with_context(|| format!("--{name} is required (or set paths.{} in the config file)", name.replace("-dir", "")))
    }
}
