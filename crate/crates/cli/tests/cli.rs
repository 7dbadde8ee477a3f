use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn plenar(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plenar"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproduce(cwd: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let o = plenar(&["reproduce", "--offline", "--work-dir", "work"], cwd);
    assert!(o.status.success(), "reproduce failed: {}", stderr(&o));
    assert!(o.stdout.is_empty(), "data goes to files only");
    files(&cwd.join("work"))
}

const EXPECTED: &[&str] = &[
    "cache/index.json",
    "corpus.jsonl",
    "parse_report.json",
    "tokens/topic.jsonl",
    "tokens/sentiment.jsonl",
    "models/embeddings.json",
    "models/topic.json",
    "models/sentiment.json",
    "reports/topic.json",
    "reports/sentiment.json",
    "predictions.jsonl",
    "trends/topic_share.csv",
    "trends/topic_share.svg",
    "trends/negative_share_by_party.csv",
    "trends/negative_share_by_party.svg",
    "trends/sentiment_deviation.csv",
    "trends/sentiment_deviation.svg",
];

#[test]
fn reproduce_offline_is_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let first = reproduce(dir.path());
    for name in EXPECTED {
        assert!(first.contains_key(Path::new(name)), "missing {name}");
        let meta_name = format!("{name}.meta.json");
        let meta: Value = serde_json::from_slice(&first[Path::new(&meta_name)]).unwrap();
        assert!(meta["tool_version"].as_str().unwrap().starts_with("plenar "), "{meta_name}");
        assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64, "{meta_name}");
        assert!(meta.get("seed").is_some(), "{meta_name}");
        assert!(meta.get("config").is_some(), "{meta_name}");
    }
    let protocols = first.keys().filter(|p| p.starts_with("cache/protocols")).count();
    assert_eq!(protocols, 10);
    let model: Value = serde_json::from_slice(&first[Path::new("models/topic.json.meta.json")]).unwrap();
    assert_eq!(model["seed"], 42);

    std::fs::remove_dir_all(dir.path().join("work")).unwrap();
    let second = reproduce(dir.path());
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (path, bytes) in &first {
        // Cached downloads carry their fetch time; everything derived from
        // them must not.
        if path.starts_with("cache/protocols") {
            continue;
        }
        assert!(bytes == &second[path], "{} differs between runs", path.display());
    }
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = plenar(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("frobnicate"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn evaluate_without_model_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = plenar(&["evaluate", "--tokens", "t.jsonl", "--labels", "l.jsonl", "--out", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--model"), "{}", stderr(&o));
}

#[test]
fn missing_input_fails_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = plenar(
        &["evaluate", "--model", "nope.json", "--tokens", "t.jsonl", "--labels", "l.jsonl", "--out", "r.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model: nope.json does not exist"), "{}", stderr(&o));
}

/// Individual subcommands on top of a reproduce run: a fingerprint mismatch
/// surfaces verbatim, config values apply and flags beat them.
#[test]
fn subcommands_chain_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    reproduce(dir.path());
    let cwd = dir.path();
    let labels = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../resources/fixtures/labels/sentiment.jsonl");

    let o = plenar(
        &[
            "evaluate",
            "--model",
            "work/models/sentiment.json",
            "--tokens",
            "work/tokens/topic.jsonl",
            "--labels",
            labels.to_str().unwrap(),
            "--out",
            "r.json",
        ],
        cwd,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("feature fingerprint mismatch for token pipeline"), "{}", stderr(&o));

    std::fs::write(
        cwd.join("run.json"),
        r#"{"seed": 7, "models": {"sentiment": {"features": "tfidf", "family": "logreg", "params": {"max_iter": 50}}}}"#,
    )
    .unwrap();
    let train = |extra: &[&str], out: &str| {
        let mut args = vec![
            "--config",
            "run.json",
            "train",
            "--task",
            "sentiment",
            "--tokens",
            "work/tokens/sentiment.jsonl",
            "--labels",
            labels.to_str().unwrap(),
            "--out",
            out,
        ];
        args.extend_from_slice(extra);
        let o = plenar(&args, cwd);
        assert!(o.status.success(), "{}", stderr(&o));
        let meta: Value = serde_json::from_slice(&std::fs::read(cwd.join(format!("{out}.meta.json"))).unwrap()).unwrap();
        meta
    };
    let meta = train(&[], "m1.json");
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config"]["spec"]["family"], "logreg");
    assert_eq!(meta["config"]["spec"]["params"]["max_iter"], 50);
    let meta = train(&["--seed", "9", "--family", "gbt"], "m2.json");
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["config"]["spec"]["family"], "gbt");

    let o = plenar(
        &[
            "evaluate",
            "--model",
            "m2.json",
            "--tokens",
            "work/tokens/sentiment.jsonl",
            "--labels",
            labels.to_str().unwrap(),
            "--all",
            "--out",
            "r.json",
        ],
        cwd,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&std::fs::read(cwd.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["family"], "gbt");
    assert_eq!(report["confusion_matrix"].as_array().unwrap().len(), 2);

    let o = plenar(
        &[
            "trends",
            "--corpus",
            "work/corpus.jsonl",
            "--topic-model",
            "work/models/topic.json",
            "--sentiment-model",
            "m2.json",
            "--embeddings",
            "work/models/embeddings.json",
            "--granularity",
            "month",
            "--smooth",
            "--out-dir",
            "monthly",
        ],
        cwd,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(cwd.join("monthly/topic_share.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("2019-11,"), "{csv}");

    let o = plenar(&["trends", "--corpus", "work/corpus.jsonl", "--out-dir", "x"], cwd);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--predictions"), "{}", stderr(&o));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"sed": 1}"#).unwrap();
    let o = plenar(&["--config", "c.json", "reproduce"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown field `sed`"), "{}", stderr(&o));
}
