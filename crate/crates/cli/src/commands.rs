//! One function per subcommand. Each checks its inputs up front, writes its
//! artifacts atomically and leaves a `.meta.json` sidecar holding the tool
//! version, config hash, seed and effective settings.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use chrono::NaiveDate;
use plenar_core::artifact::{read_json, read_jsonl, sidecar_path, write_json_pretty, write_jsonl, write_sidecar, Sidecar};
use plenar_core::classifiers::TrainedModel;
use plenar_core::embeddings::{train_skipgram, EmbeddingConfig, EmbeddingMatrix};
use plenar_core::eval::EvalReport;
use plenar_core::labels::{read_labels, Task};
use plenar_core::parser::{assign_uids, SpeechParser};
use plenar_core::preprocess::{Preset, TokenPipeline, TokenPipelineConfig, TokenizedSpeech};
use plenar_core::tasks::{evaluate_task, resolve_featurizer, train_task, FeatureSource, FeatureSpec, ModelMetadata};
use plenar_core::trends::{all_tables, predict_corpus, Prediction, Predictor};
use plenar_core::Speech;
use plenar_ingest::{offline_client, ApiKey, DipClient, IngestReport, ProtocolCache, UreqTransport};
use plenar_labels::{LabelStore, StoreConfig};
use serde_json::{json, Value};

use crate::config::{Context, FeatureKind, TaskModel, TrendSettings};

/// Date range covering every bundled fixture protocol.
pub const FIXTURE_FROM: &str = "2019-10-01";
pub const FIXTURE_TO: &str = "2024-12-31";

/// Skip-gram settings for the fixture corpus, which is far smaller than a
/// legislative period: a lower frequency cutoff and a smaller dimension.
pub fn desk_embedding_config() -> EmbeddingConfig {
    EmbeddingConfig {
        dim: 50,
        min_count: 2,
        ..EmbeddingConfig::default()
    }
}

pub fn require(path: &Path, flag: &str) -> Result<()> {
    if !path.exists() {
        bail!("--{flag}: {} does not exist", path.display());
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// The token pipeline recorded in an artifact's sidecar, rebuilt from the
/// current resource files and checked against the recorded fingerprint.
fn recorded_pipeline(artifact: &Path) -> Result<TokenPipeline> {
    let meta = sidecar_path(artifact);
    let sidecar: Sidecar<Value> = read_json(&meta).with_context(|| {
        format!("{} has no readable sidecar; it was not written by `plenar preprocess` or `plenar train`", artifact.display())
    })?;
    let config: TokenPipelineConfig = serde_json::from_value(sidecar.config["pipeline"].clone())
        .with_context(|| format!("{}: no token pipeline recorded", meta.display()))?;
    let pipeline = TokenPipeline::new(config)?;
    let recorded = sidecar.config["pipeline_fingerprint"].as_str().unwrap_or_default();
    if recorded != pipeline.fingerprint() {
        return Err(plenar_core::Error::FingerprintMismatch {
            what: format!("token pipeline of {} (resource files changed since it was written)", artifact.display()),
            expected: recorded.to_string(),
            actual: pipeline.fingerprint(),
        }
        .into());
    }
    Ok(pipeline)
}

fn embeddings_for(spec: &FeatureSpec, path: Option<&Path>) -> Result<Option<EmbeddingMatrix>> {
    match spec {
        FeatureSpec::Embedding { .. } => {
            let path = path.context("--embeddings is required: the model uses embedding features")?;
            require(path, "embeddings")?;
            Ok(Some(EmbeddingMatrix::load(path)?))
        }
        FeatureSpec::Tfidf { .. } => Ok(None),
    }
}

pub struct IngestArgs {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub cache_dir: PathBuf,
    pub workers: usize,
    pub offline: bool,
}

pub fn ingest(ctx: &Context, a: &IngestArgs) -> Result<IngestReport> {
    if a.from > a.to {
        bail!("--from {} is after --to {}", a.from, a.to);
    }
    std::fs::create_dir_all(&a.cache_dir).with_context(|| format!("creating {}", a.cache_dir.display()))?;
    let cache = ProtocolCache::new(&a.cache_dir);
    let settings = &ctx.config.ingest;
    let (report, base_url) = if a.offline {
        let client = offline_client(&ctx.fixture_protocols())?;
        let url = client.config().base_url.clone();
        (plenar_ingest::ingest(&client, &cache, a.from, a.to, a.workers)?, url)
    } else {
        let key = ApiKey::resolve(settings.api_key.as_deref())?;
        let transport = UreqTransport::new(Duration::from_secs(settings.timeout_secs));
        let client = DipClient::new(transport, key, settings.client.clone());
        (plenar_ingest::ingest(&client, &cache, a.from, a.to, a.workers)?, settings.client.base_url.clone())
    };
    let config = json!({
        "from": a.from,
        "to": a.to,
        "offline": a.offline,
        "workers": a.workers,
        "base_url": base_url,
        "client": settings.client,
    });
    write_sidecar(&cache.index_path(), &config, None)?;
    Ok(report)
}

pub fn parse(ctx: &Context, cache_dir: &Path, out: &Path, report_path: &Path) -> Result<Vec<Speech>> {
    require(cache_dir, "cache-dir")?;
    let protocols = ProtocolCache::new(cache_dir).load_all()?;
    if protocols.is_empty() {
        bail!("no protocols in cache {}; run `plenar ingest` first", cache_dir.display());
    }
    let parser = SpeechParser::from_resources(&ctx.resources)?;
    let mut per_protocol = Vec::with_capacity(protocols.len());
    let mut reports = Vec::with_capacity(protocols.len());
    for p in &protocols {
        let (speeches, report) = parser.extract(p)?;
        per_protocol.push(speeches);
        reports.push(report);
    }
    let speeches = assign_uids(per_protocol)?;
    let short = speeches.iter().filter(|s| s.short).count();
    log::info!("{} speeches from {} protocols ({short} flagged short)", speeches.len(), protocols.len());
    ensure_parent(out)?;
    ensure_parent(report_path)?;
    write_jsonl(out, &speeches)?;
    write_json_pretty(
        report_path,
        &json!({
            "protocols": reports.len(),
            "speeches": speeches.len(),
            "short": short,
            "headers_rejected": reports.iter().map(|r| r.headers_rejected.len()).sum::<usize>(),
            "reports": reports,
        }),
    )?;
    let config = json!({
        "cache_dir": cache_dir,
        "resources": ctx.resources,
        "pattern_version": parser.patterns.version,
    });
    write_sidecar(out, &config, None)?;
    write_sidecar(report_path, &config, None)?;
    Ok(speeches)
}

pub fn preprocess(ctx: &Context, corpus: &Path, preset: Preset, out: &Path) -> Result<()> {
    require(corpus, "corpus")?;
    let speeches: Vec<Speech> = read_jsonl(corpus)?;
    let config = TokenPipelineConfig::preset(preset, &ctx.resources);
    let pipeline = TokenPipeline::new(config.clone())?;
    let tokens: Vec<TokenizedSpeech> = speeches.iter().map(|s| pipeline.apply(s)).collect();
    ensure_parent(out)?;
    write_jsonl(out, &tokens)?;
    write_sidecar(
        out,
        &json!({
            "corpus": corpus,
            "preset": preset,
            "pipeline": config,
            "pipeline_fingerprint": pipeline.fingerprint(),
        }),
        None,
    )?;
    log::info!("{} token lists ({preset:?} preset) written to {}", tokens.len(), out.display());
    Ok(())
}

pub fn train_embeddings(tokens_path: &Path, out: &Path, config: &EmbeddingConfig) -> Result<EmbeddingMatrix> {
    require(tokens_path, "tokens")?;
    config.validate()?;
    let pipeline = recorded_pipeline(tokens_path)?;
    let tokens: Vec<TokenizedSpeech> = read_jsonl(tokens_path)?;
    let docs: Vec<&[String]> = tokens.iter().map(|t| t.tokens.as_slice()).collect();
    let m = train_skipgram(&docs, config)?;
    ensure_parent(out)?;
    m.save(out)?;
    write_sidecar(
        out,
        &json!({
            "tokens": tokens_path,
            "pipeline_fingerprint": pipeline.fingerprint(),
            "embedding": config,
            "vocab_size": m.vocab.len(),
            "digest": m.digest(),
        }),
        Some(config.seed),
    )?;
    log::info!("{} vectors of dimension {} written to {}", m.vocab.len(), m.dim(), out.display());
    Ok(m)
}

pub struct TrainArgs {
    pub task: Task,
    pub model: TaskModel,
    pub tokens: PathBuf,
    pub labels: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<TrainedModel> {
    require(&a.tokens, "tokens")?;
    require(&a.labels, "labels")?;
    let pipeline = recorded_pipeline(&a.tokens)?;
    let tokens: Vec<TokenizedSpeech> = read_jsonl(&a.tokens)?;
    let labels = read_labels(&a.labels, a.task)?;
    let embeddings = match a.model.features {
        FeatureKind::Embedding => {
            let path = a.embeddings.as_deref().context("--embeddings is required for embedding features")?;
            require(path, "embeddings")?;
            Some(EmbeddingMatrix::load(path)?)
        }
        FeatureKind::Tfidf => None,
    };
    let source = match &embeddings {
        Some(m) => FeatureSource::Embedding(m),
        None => FeatureSource::Tfidf {
            min_df: ctx.config.tfidf_min_df,
        },
    };
    let spec = a.model.spec(ctx.seed);
    spec.validate()?;
    let split = ctx.split();
    let outcome = train_task(a.task, &spec, &tokens, &labels, source, &pipeline, &split)?;
    ensure_parent(&a.out)?;
    outcome.model.save(&a.out)?;
    write_sidecar(
        &a.out,
        &json!({
            "task": a.task,
            "spec": spec,
            "features": a.model.features,
            "tokens": a.tokens,
            "labels": a.labels,
            "embeddings": embeddings.as_ref().map(|_| &a.embeddings),
            "split": split,
            "tfidf_min_df": ctx.config.tfidf_min_df,
            "pipeline": pipeline.config(),
            "pipeline_fingerprint": pipeline.fingerprint(),
            "n_train": outcome.n_train,
            "n_holdout": outcome.n_holdout,
            "final_loss": outcome.loss_history.last(),
        }),
        Some(ctx.seed),
    )?;
    log::info!(
        "{} {} model trained on {} speeches ({} held out), written to {}",
        a.task,
        spec.family(),
        outcome.n_train,
        outcome.n_holdout,
        a.out.display()
    );
    Ok(outcome.model)
}

pub struct EvaluateArgs {
    pub model: PathBuf,
    pub tokens: PathBuf,
    pub labels: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub all_labeled: bool,
    pub out: PathBuf,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<EvalReport> {
    require(&a.model, "model")?;
    require(&a.tokens, "tokens")?;
    require(&a.labels, "labels")?;
    let model = TrainedModel::load(&a.model)?;
    let meta = ModelMetadata::of(&model)?;
    let pipeline = recorded_pipeline(&a.tokens)?;
    let embeddings = embeddings_for(&meta.features, a.embeddings.as_deref())?;
    let featurizer = resolve_featurizer(&meta.features, &pipeline, embeddings.as_ref())?;
    let tokens: Vec<TokenizedSpeech> = read_jsonl(&a.tokens)?;
    let labels = read_labels(&a.labels, meta.task)?;
    let report = evaluate_task(&model, &featurizer, &tokens, &labels, a.all_labeled)?;
    ensure_parent(&a.out)?;
    write_json_pretty(&a.out, &report)?;
    write_sidecar(
        &a.out,
        &json!({
            "model": a.model,
            "tokens": a.tokens,
            "labels": a.labels,
            "embeddings": embeddings.as_ref().map(|_| &a.embeddings),
            "items": if a.all_labeled { "all_labeled" } else { "holdout" },
        }),
        Some(model.spec.seed),
    )?;
    log::info!(
        "{} {}: accuracy {:.3}, F1 {:.3}, AUROC {:.3} on {} speeches",
        report.task,
        report.family,
        report.accuracy,
        report.f1,
        report.auroc,
        report.n_items
    );
    Ok(report)
}

fn predictor(model_path: &Path, flag: &str, embeddings: Option<&Path>) -> Result<Predictor> {
    require(model_path, flag)?;
    let model = TrainedModel::load(model_path)?;
    let meta = ModelMetadata::of(&model)?;
    let pipeline = recorded_pipeline(model_path)?;
    let m = embeddings_for(&meta.features, embeddings)?;
    Ok(Predictor::new(model, pipeline, m.as_ref())?)
}

pub struct PredictArgs {
    pub corpus: PathBuf,
    pub topic_model: PathBuf,
    pub sentiment_model: PathBuf,
    pub embeddings: Option<PathBuf>,
}

impl PredictArgs {
    fn provenance(&self) -> Value {
        json!({
            "corpus": self.corpus,
            "topic_model": self.topic_model,
            "sentiment_model": self.sentiment_model,
            "embeddings": self.embeddings,
        })
    }
}

pub fn predict(a: &PredictArgs) -> Result<Vec<Prediction>> {
    require(&a.corpus, "corpus")?;
    let topic = predictor(&a.topic_model, "topic-model", a.embeddings.as_deref())?;
    let sentiment = predictor(&a.sentiment_model, "sentiment-model", a.embeddings.as_deref())?;
    let speeches: Vec<Speech> = read_jsonl(&a.corpus)?;
    let preds = predict_corpus(&speeches, &topic, &sentiment)?;
    let oov = preds.iter().filter(|p| p.oov).count();
    if oov > 0 {
        log::warn!("{oov} speech(es) had no known token for one of the models");
    }
    Ok(preds)
}

pub fn write_predictions(a: &PredictArgs, preds: &[Prediction], out: &Path) -> Result<()> {
    ensure_parent(out)?;
    write_jsonl(out, preds)?;
    write_sidecar(out, &a.provenance(), None)?;
    log::info!("{} predictions written to {}", preds.len(), out.display());
    Ok(())
}

pub fn trends(preds: &[Prediction], settings: &TrendSettings, out_dir: &Path, inputs: Value) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let config = json!({"inputs": inputs, "trends": settings});
    let mut written = Vec::new();
    for table in all_tables(preds, settings.granularity, settings.min_count) {
        let (csv, svg) = table.write(out_dir, settings.smooth)?;
        for path in [csv, svg] {
            write_sidecar(&path, &config, None)?;
            written.push(path);
        }
    }
    log::info!("trend tables over {} predictions written to {}", preds.len(), out_dir.display());
    Ok(written)
}

pub fn trends_inputs_from_file(predictions: &Path) -> Value {
    json!({"predictions": predictions})
}

pub fn trends_inputs_from_models(a: &PredictArgs) -> Value {
    a.provenance()
}

pub struct ServeArgs {
    pub corpus: PathBuf,
    pub store: PathBuf,
    pub bind: IpAddr,
    pub port: u16,
    pub passes: u8,
    pub ui: Option<PathBuf>,
}

pub fn serve_annotation(ctx: &Context, a: &ServeArgs) -> Result<()> {
    require(&a.corpus, "corpus")?;
    if let Some(ui) = &a.ui {
        require(ui, "ui")?;
    }
    let speeches: Vec<Speech> = read_jsonl(&a.corpus)?;
    ensure_parent(&a.store)?;
    let store = LabelStore::open(
        &a.store,
        speeches,
        StoreConfig {
            passes: a.passes,
            seed: ctx.seed,
        },
    )?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    let addr = SocketAddr::new(a.bind, a.port);
    runtime
        .block_on(plenar_labels::serve(Arc::new(RwLock::new(store)), a.ui.clone(), addr))
        .with_context(|| format!("serving on {addr}"))
}

#[derive(Debug)]
pub struct ReproduceSummary {
    pub artifacts: Vec<PathBuf>,
    pub reports: Vec<EvalReport>,
}

/// The whole pipeline on the bundled fixture protocols and sample labels.
pub fn reproduce(ctx: &Context, work: &Path) -> Result<ReproduceSummary> {
    if !ctx.offline {
        log::info!("reproduce always runs on the bundled fixtures; no network is used");
    }
    std::fs::create_dir_all(work).with_context(|| format!("creating {}", work.display()))?;
    let step = |name: &str| log::info!("reproduce: {name}");

    step("ingest");
    let cache_dir = work.join("cache");
    ingest(
        ctx,
        &IngestArgs {
            from: FIXTURE_FROM.parse()?,
            to: FIXTURE_TO.parse()?,
            cache_dir: cache_dir.clone(),
            workers: ctx.config.ingest.workers,
            offline: true,
        },
    )?;

    step("parse");
    let corpus = work.join("corpus.jsonl");
    let parse_report = work.join("parse_report.json");
    parse(ctx, &cache_dir, &corpus, &parse_report)?;

    step("preprocess");
    let tokens = |task: Task| work.join(format!("tokens/{}.jsonl", task.name()));
    for (task, preset) in [(Task::Topic, Preset::Topic), (Task::Sentiment, Preset::Sentiment)] {
        preprocess(ctx, &corpus, preset, &tokens(task))?;
    }

    step("train-embeddings");
    let embeddings = work.join("models/embeddings.json");
    let emb_config = EmbeddingConfig {
        seed: ctx.seed,
        ..ctx.config.embedding.clone().unwrap_or_else(desk_embedding_config)
    };
    train_embeddings(&tokens(Task::Topic), &embeddings, &emb_config)?;

    let model = |task: Task| work.join(format!("models/{}.json", task.name()));
    let report = |task: Task| work.join(format!("reports/{}.json", task.name()));
    let mut reports = Vec::new();
    for task in [Task::Topic, Task::Sentiment] {
        step(&format!("train {task}"));
        train(
            ctx,
            &TrainArgs {
                task,
                model: ctx.config.models.for_task(task),
                tokens: tokens(task),
                labels: ctx.fixture_labels(task),
                embeddings: Some(embeddings.clone()),
                out: model(task),
            },
        )?;
        step(&format!("evaluate {task}"));
        reports.push(evaluate(&EvaluateArgs {
            model: model(task),
            tokens: tokens(task),
            labels: ctx.fixture_labels(task),
            embeddings: Some(embeddings.clone()),
            all_labeled: false,
            out: report(task),
        })?);
    }

    step("predict");
    let predictions = work.join("predictions.jsonl");
    let args = PredictArgs {
        corpus: corpus.clone(),
        topic_model: model(Task::Topic),
        sentiment_model: model(Task::Sentiment),
        embeddings: Some(embeddings.clone()),
    };
    let preds = predict(&args)?;
    write_predictions(&args, &preds, &predictions)?;

    step("trends");
    let trend_files = trends(
        &preds,
        &ctx.config.trends,
        &work.join("trends"),
        trends_inputs_from_file(&predictions),
    )?;

    let mut artifacts = vec![
        cache_dir.join("index.json"),
        corpus,
        parse_report,
        tokens(Task::Topic),
        tokens(Task::Sentiment),
        embeddings,
        model(Task::Topic),
        model(Task::Sentiment),
        report(Task::Topic),
        report(Task::Sentiment),
        predictions,
    ];
    artifacts.extend(trend_files);
    for a in &artifacts {
        if !a.is_file() || !sidecar_path(a).is_file() {
            bail!("reproduce: expected artifact {} or its sidecar is missing", a.display());
        }
    }
    log::info!("reproduce finished: {} artifacts under {}", artifacts.len(), work.display());
    Ok(ReproduceSummary { artifacts, reports })
}
