//! Argument definitions and dispatch. Flags override the config file.

use std::net::IpAddr;
use std::path::PathBuf;

use anyhow::{Context as _, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use plenar_core::classifiers::{Family, ModelSpec};
use plenar_core::embeddings::EmbeddingConfig;
use plenar_core::labels::Task;
use plenar_core::preprocess::Preset;
use plenar_core::trends::Granularity;

use crate::commands::{self, EvaluateArgs, IngestArgs, PredictArgs, ServeArgs, TrainArgs};
use crate::config::{Context, FeatureKind, RunConfig, TaskModel};

#[derive(Debug, Parser)]
#[command(name = "plenar", version, about = "Topic and sentiment trends in Bundestag plenary protocols")]
pub struct Cli {
    /// Root seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Use the bundled fixture protocols instead of the DIP API.
    #[arg(long, global = true)]
    pub offline: bool,

    /// Directory with party map, header patterns, roster, stopwords, lemmas
    /// and fixtures.
    #[arg(long, global = true)]
    pub resources: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download plenary protocols for a date range into the cache.
    Ingest {
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Split cached protocols into speeches.
    Parse {
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tokenize a corpus with a task preset.
    Preprocess {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the labeling API and UI.
    ServeAnnotation {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// 2 requires an agreeing second annotator.
        #[arg(long, default_value_t = 2)]
        passes: u8,
        /// Built annotation UI served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Train skip-gram embeddings on a tokens file.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Train a topic or sentiment classifier.
    Train {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long, value_parser = parse_family)]
        family: Option<Family>,
        #[arg(long, value_enum)]
        features: Option<FeatureKind>,
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on its held-out speeches (or all labeled ones).
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Evaluate on every labeled speech instead of the holdout.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict topic and sentiment for every speech of a corpus.
    Predict {
        #[command(flatten)]
        models: ModelInputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate predictions into trend tables and charts.
    Trends {
        /// Predictions from `plenar predict`; otherwise predicted here.
        #[arg(long, conflicts_with_all = ["corpus", "topic_model", "sentiment_model"])]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        models: OptionalModelInputs,
        #[arg(long, value_parser = parse_granularity)]
        granularity: Option<Granularity>,
        #[arg(long)]
        min_count: Option<u64>,
        /// Centered 3-period rolling mean in the charts; CSVs stay raw.
        #[arg(long)]
        smooth: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the whole pipeline on the bundled fixtures.
    Reproduce {
        #[arg(long, default_value = "reproduce")]
        work_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainEmbeddingsArgs {
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    subsample: Option<f64>,
    /// More than 1 is faster but not reproducible.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    topic_model: PathBuf,
    #[arg(long)]
    sentiment_model: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptionalModelInputs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, requires = "sentiment_model")]
    topic_model: Option<PathBuf>,
    #[arg(long, requires = "topic_model")]
    sentiment_model: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: plenar_core::Error| e.to_string())
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: plenar_core::Error| e.to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: plenar_core::Error| e.to_string())
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    s.parse().map_err(|e: plenar_core::Error| e.to_string())
}

fn embedding_config(ctx: &Context, a: &TrainEmbeddingsArgs) -> EmbeddingConfig {
    let base = ctx.config.embedding.clone().unwrap_or_default();
    EmbeddingConfig {
        dim: a.dim.unwrap_or(base.dim),
        window: a.window.unwrap_or(base.window),
        negatives: a.negatives.unwrap_or(base.negatives),
        epochs: a.epochs.unwrap_or(base.epochs),
        min_count: a.min_count.unwrap_or(base.min_count),
        initial_lr: a.learning_rate.unwrap_or(base.initial_lr),
        subsample_threshold: a.subsample.unwrap_or(base.subsample_threshold),
        workers: a.workers.unwrap_or(base.workers),
        seed: ctx.seed,
    }
}

/// Config model for the task, with the family and feature kind replaced by
/// flags when given. A different family starts from its defaults.
fn task_model(ctx: &Context, task: Task, family: Option<Family>, features: Option<FeatureKind>) -> TaskModel {
    let mut m = ctx.config.models.for_task(task);
    if let Some(f) = family {
        if m.spec(0).family() != f {
            m.hyper = ModelSpec::new(f, 0).hyper;
        }
    }
    if let Some(f) = features {
        m.features = f;
    }
    m
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = Context::new(config, cli.seed, cli.offline, cli.resources)?;
    let paths = ctx.config.paths.clone();
    match cli.command {
        Command::Ingest {
            from,
            to,
            workers,
            cache_dir,
        } => {
            let from = from.or(ctx.config.from).context("--from is required (or set `from` in the config file)")?;
            let to = to.or(ctx.config.to).context("--to is required (or set `to` in the config file)")?;
            let report = commands::ingest(
                &ctx,
                &IngestArgs {
                    from,
                    to,
                    cache_dir: ctx.path_or(cache_dir, &paths.cache, "cache-dir")?,
                    workers: workers.unwrap_or(ctx.config.ingest.workers),
                    offline: ctx.offline,
                },
            )?;
            log::info!(
                "{} protocols ({} downloaded, {} cached, {} superseded versions dropped)",
                report.refs.len(),
                report.downloaded,
                report.from_cache,
                report.superseded
            );
        }
        Command::Parse { cache_dir, out, report } => {
            let cache_dir = ctx.path_or(cache_dir, &paths.cache, "cache-dir")?;
            let out = ctx.path_or(out, &paths.corpus, "out")?;
            let report = match report {
                Some(r) => r,
                None => out.with_file_name("parse_report.json"),
            };
            commands::parse(&ctx, &cache_dir, &out, &report)?;
        }
        Command::Preprocess { corpus, preset, out } => {
            let corpus = ctx.path_or(corpus, &paths.corpus, "corpus")?;
            commands::preprocess(&ctx, &corpus, preset, &out)?;
        }
        Command::ServeAnnotation {
            corpus,
            store,
            port,
            bind,
            passes,
            ui,
        } => {
            let corpus = ctx.path_or(corpus, &paths.corpus, "corpus")?;
            commands::serve_annotation(
                &ctx,
                &ServeArgs {
                    corpus,
                    store,
                    bind,
                    port,
                    passes,
                    ui,
                },
            )?;
        }
        Command::TrainEmbeddings(a) => {
            let config = embedding_config(&ctx, &a);
            commands::train_embeddings(&a.tokens, &a.out, &config)?;
        }
        Command::Train {
            task,
            family,
            features,
            tokens,
            labels,
            embeddings,
            out,
        } => {
            let model = task_model(&ctx, task, family, features);
            commands::train(
                &ctx,
                &TrainArgs {
                    task,
                    model,
                    tokens,
                    labels,
                    embeddings,
                    out,
                },
            )?;
        }
        Command::Evaluate {
            model,
            tokens,
            labels,
            embeddings,
            all,
            out,
        } => {
            commands::evaluate(&EvaluateArgs {
                model,
                tokens,
                labels,
                embeddings,
                all_labeled: all,
                out,
            })?;
        }
        Command::Predict { models, out } => {
            let args = PredictArgs {
                corpus: ctx.path_or(models.corpus, &paths.corpus, "corpus")?,
                topic_model: models.topic_model,
                sentiment_model: models.sentiment_model,
                embeddings: models.embeddings,
            };
            let preds = commands::predict(&args)?;
            commands::write_predictions(&args, &preds, &out)?;
        }
        Command::Trends {
            predictions,
            models,
            granularity,
            min_count,
            smooth,
            out_dir,
        } => {
            let mut settings = ctx.config.trends.clone();
            settings.granularity = granularity.unwrap_or(settings.granularity);
            settings.min_count = min_count.unwrap_or(settings.min_count);
            settings.smooth |= smooth;
            let (preds, inputs) = match predictions {
                Some(p) => {
                    commands::require(&p, "predictions")?;
                    let preds = plenar_core::artifact::read_jsonl(&p)?;
                    (preds, commands::trends_inputs_from_file(&p))
                }
                None => {
                    let (Some(topic_model), Some(sentiment_model)) = (models.topic_model, models.sentiment_model) else {
                        anyhow::bail!("either --predictions or --topic-model with --sentiment-model is required");
                    };
                    let args = PredictArgs {
                        corpus: ctx.path_or(models.corpus, &paths.corpus, "corpus")?,
                        topic_model,
                        sentiment_model,
                        embeddings: models.embeddings,
                    };
                    (commands::predict(&args)?, commands::trends_inputs_from_models(&args))
                }
            };
            commands::trends(&preds, &settings, &out_dir, inputs)?;
        }
        Command::Reproduce { work_dir } => {
            commands::reproduce(&ctx, &work_dir)?;
        }
    }
    Ok(())
}
