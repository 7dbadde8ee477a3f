use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use plenar_core::labels::{parse_labels, Task};
use plenar_core::{Party, Speech};
use plenar_labels::store::{AdjudicateRequest, SubmitRequest};
use plenar_labels::*;
use serde_json::{json, Value};

fn speeches(n: u64) -> Vec<Speech> {
    (1..=n)
        .map(|u_id| Speech {
            u_id,
            session_id: "19/125".into(),
            date: "2019-11-08".parse().unwrap(),
            speaker: format!("Speaker {u_id}"),
            party: Party::Spd,
            position: "Abgeordneter".into(),
            text: format!("Rede Nummer {u_id}"),
            short: false,
        })
        .collect()
}

fn open(path: &Path, n: u64, passes: u8) -> LabelStore {
    LabelStore::open(path, speeches(n), StoreConfig { passes, seed: 7 }).unwrap()
}

fn label(u_id: u64, task: Task, label: Value, annotator: &str) -> SubmitRequest {
    SubmitRequest {
        u_id,
        task,
        label,
        annotator: annotator.into(),
        pass: None,
    }
}

#[test]
fn agreement_gives_consensus() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(&dir.path().join("labels.log"), 5, 2);
    let r = s.submit(label(1, Task::Topic, json!("Environment"), "anna")).unwrap();
    assert_eq!(r.record.pass, Pass::First);
    assert_eq!(r.consensus, Consensus::PendingCrosscheck);
    let r = s.submit(label(1, Task::Topic, json!("Environment"), "ben")).unwrap();
    assert_eq!(r.record.pass, Pass::Crosscheck);
    assert_eq!(r.consensus, Consensus::Agreed { label: json!("Environment") });
}

#[test]
fn disagreement_then_adjudication() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(&dir.path().join("labels.log"), 5, 2);
    s.submit(label(2, Task::Sentiment, json!(1), "anna")).unwrap();
    let r = s.submit(label(2, Task::Sentiment, json!(-1), "ben")).unwrap();
    assert_eq!(
        r.consensus,
        Consensus::Disagreement {
            first: json!(1),
            crosscheck: json!(-1)
        }
    );
    assert_eq!(s.disagreements().len(), 1);
    assert!(s.export(Task::Sentiment).is_empty());
    let adj = |u_id| AdjudicateRequest {
        u_id,
        task: Task::Sentiment,
        label: json!(-1),
        annotator: "carla".into(),
    };
    assert!(matches!(s.adjudicate(adj(3)), Err(LabelError::Conflict(_))));
    assert_eq!(s.adjudicate(adj(2)).unwrap(), Consensus::Agreed { label: json!(-1) });
    assert!(s.disagreements().is_empty());
    assert_eq!(s.export(Task::Sentiment)[&2], 0);
    assert!(matches!(s.adjudicate(adj(2)), Err(LabelError::Conflict(_))));
}

#[test]
fn request_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(&dir.path().join("labels.log"), 5, 2);
    assert!(matches!(s.submit(label(1, Task::Topic, json!("Sport"), "a")), Err(LabelError::BadRequest(_))));
    assert!(matches!(s.submit(label(1, Task::Sentiment, json!(0), "a")), Err(LabelError::BadRequest(_))));
    assert!(matches!(s.submit(label(1, Task::Topic, json!(SKIP_NEUTRAL), "a")), Err(LabelError::BadRequest(_))));
    assert!(matches!(s.submit(label(99, Task::Topic, json!("Health"), "a")), Err(LabelError::NotFound(_))));
    assert!(matches!(s.submit(label(1, Task::Topic, json!("Health"), " ")), Err(LabelError::BadRequest(_))));
    s.submit(label(1, Task::Topic, json!("Health"), "a")).unwrap();
    // Same annotator again, explicit or assigned pass.
    assert!(matches!(s.submit(label(1, Task::Topic, json!("Health"), "a")), Err(LabelError::Conflict(_))));
    let mut dup = label(1, Task::Topic, json!("Health"), "b");
    dup.pass = Some(Pass::First);
    assert!(matches!(s.submit(dup), Err(LabelError::Conflict(_))));
    let mut early = label(2, Task::Topic, json!("Health"), "b");
    early.pass = Some(Pass::Crosscheck);
    assert!(matches!(s.submit(early), Err(LabelError::Conflict(_))));
    s.submit(label(1, Task::Topic, json!("Health"), "b")).unwrap();
    assert!(matches!(s.submit(label(1, Task::Topic, json!("Health"), "c")), Err(LabelError::Conflict(_))));
    assert_eq!(s.record_count(), 2);
}

#[test]
fn skip_neutral_leaves_sentiment_pool_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(&dir.path().join("labels.log"), 1, 2);
    let r = s.submit(label(1, Task::Sentiment, json!(SKIP_NEUTRAL), "anna")).unwrap();
    assert_eq!(r.consensus, Consensus::Excluded);
    assert!(s.next_speech(Task::Sentiment, "ben").unwrap().is_none());
    assert_eq!(s.next_speech(Task::Topic, "ben").unwrap().unwrap().speech.u_id, 1);
    assert!(s.export(Task::Sentiment).is_empty());
    assert_eq!(s.progress().tasks[&Task::Sentiment].excluded, 1);
}

#[test]
fn single_pass_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(&dir.path().join("labels.log"), 3, 1);
    let r = s.submit(label(3, Task::Topic, json!("Health"), "anna")).unwrap();
    assert_eq!(r.consensus, Consensus::Agreed { label: json!("Health") });
    let mut cross = label(3, Task::Topic, json!("Health"), "ben");
    cross.pass = Some(Pass::Crosscheck);
    assert!(matches!(s.submit(cross), Err(LabelError::BadRequest(_))));
    assert!(matches!(s.submit(label(3, Task::Topic, json!("Health"), "ben")), Err(LabelError::Conflict(_))));
}

#[test]
fn export_counts_sorted_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(&dir.path().join("labels.log"), 10, 2);
    assert_eq!(s.export_jsonl(Task::Topic), (String::new(), 0));
    for (u, a, b) in [(7, "Health", "Health"), (2, "Environment", "Environment"), (5, "Health", "Health"), (9, "Health", "Environment")] {
        s.submit(label(u, Task::Topic, json!(a), "anna")).unwrap();
        s.submit(label(u, Task::Topic, json!(b), "ben")).unwrap();
    }
    let (text, n) = s.export_jsonl(Task::Topic);
    assert_eq!(n, 3);
    assert_eq!(
        text,
        "{\"u_id\":2,\"label\":\"Environment\"}\n{\"u_id\":5,\"label\":\"Health\"}\n{\"u_id\":7,\"label\":\"Health\"}\n"
    );
    assert_eq!(s.export_jsonl(Task::Topic).0, text);
    assert_eq!(parse_labels(&text, Task::Topic).unwrap().len(), 3);
}

#[test]
fn next_speech_is_seeded_and_exhausts() {
    let dir = tempfile::tempdir().unwrap();
    let order = |path: &Path| {
        let mut s = open(path, 8, 1);
        let mut seen = Vec::new();
        while let Some(n) = s.next_speech(Task::Topic, "anna").unwrap() {
            seen.push(n.speech.u_id);
            s.submit(label(n.speech.u_id, Task::Topic, json!("Health"), "anna")).unwrap();
        }
        seen
    };
    let a = order(&dir.path().join("a.log"));
    let b = order(&dir.path().join("b.log"));
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);
    assert_eq!(a.iter().collect::<HashSet<_>>().len(), 8);
    assert_ne!(a, (1..=8).collect::<Vec<_>>(), "order is shuffled");
}

#[test]
fn interleaved_annotators_never_see_a_speech_twice() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(&dir.path().join("labels.log"), 60, 2);
    let mut seen: [HashSet<u64>; 2] = Default::default();
    let names = ["anna", "ben"];
    for step in 0..100 {
        let who = step % 2;
        let Some(n) = s.next_speech(Task::Sentiment, names[who]).unwrap() else { continue };
        assert!(seen[who].insert(n.speech.u_id), "{} served {} twice", names[who], n.speech.u_id);
        let v = if n.speech.u_id % 3 == 0 { -1 } else { 1 };
        s.submit(label(n.speech.u_id, Task::Sentiment, json!(v), names[who])).unwrap();
    }
    // Crosschecks are preferred, so most first passes got a second look.
    let p = &s.progress().tasks[&Task::Sentiment];
    assert!(p.consensus >= 45, "{p:?}");
}

#[test]
fn restart_rebuilds_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.log");
    {
        let mut s = open(&path, 5, 2);
        s.submit(label(1, Task::Topic, json!("Health"), "anna")).unwrap();
        s.submit(label(1, Task::Topic, json!("Health"), "ben")).unwrap();
        s.submit(label(2, Task::Sentiment, json!(-1), "anna")).unwrap();
    }
    let mut s = open(&path, 5, 2);
    assert_eq!(s.record_count(), 3);
    assert_eq!(s.consensus(1, Task::Topic), Consensus::Agreed { label: json!("Health") });
    assert_eq!(s.consensus(2, Task::Sentiment), Consensus::PendingCrosscheck);
    s.submit(label(2, Task::Sentiment, json!(-1), "ben")).unwrap();
    assert_eq!(open(&path, 5, 2).export(Task::Sentiment).len(), 1);
}

#[test]
fn tampering_breaks_the_chain() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.log");
    {
        let mut s = open(&path, 5, 2);
        for u in 1..=3 {
            s.submit(label(u, Task::Sentiment, json!(1), "anna")).unwrap();
        }
    }
    let original = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = original.lines().collect();

    let edited = original.replacen("\"label\":1", "\"label\":-1", 1);
    std::fs::write(&path, &edited).unwrap();
    assert!(matches!(LabelStore::open(&path, speeches(5), StoreConfig::default()), Err(LabelError::Corrupt(_))));

    let deleted = format!("{}\n{}\n", lines[0], lines[2]);
    std::fs::write(&path, deleted).unwrap();
    assert!(matches!(LabelStore::open(&path, speeches(5), StoreConfig::default()), Err(LabelError::Corrupt(_))));

    let garbage = format!("{}\nnot json\n{}\n", lines[0], lines[1]);
    std::fs::write(&path, garbage).unwrap();
    assert!(matches!(LabelStore::open(&path, speeches(5), StoreConfig::default()), Err(LabelError::Corrupt(_))));
}

#[test]
fn torn_final_write_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.log");
    {
        let mut s = open(&path, 5, 2);
        s.submit(label(1, Task::Topic, json!("Health"), "anna")).unwrap();
        s.submit(label(2, Task::Topic, json!("Health"), "anna")).unwrap();
    }
    let full = std::fs::read_to_string(&path).unwrap();
    let second_start = full.find('\n').unwrap() + 1;
    let torn = &full[..second_start + (full.len() - second_start) / 2];
    std::fs::write(&path, torn).unwrap();
    let mut s = open(&path, 5, 2);
    assert_eq!(s.record_count(), 1);
    s.submit(label(3, Task::Topic, json!("Health"), "anna")).unwrap();
    assert_eq!(open(&path, 5, 2).record_count(), 2);
}

const CHILD_ENV: &str = "PLENAR_LABELS_CHILD_STORE";

/// Child side of the kill test: labels speeches forever, printing each
/// acknowledged u_id. Does nothing in a normal test run.
#[test]
fn child_writer() {
    let Ok(path) = std::env::var(CHILD_ENV) else { return };
    let mut s = open(Path::new(&path), 100_000, 1);
    let mut out = std::io::stdout();
    for u in 1..=100_000 {
        s.submit(label(u, Task::Topic, json!("Health"), "anna")).unwrap();
        writeln!(out, "ack {u}").unwrap();
        out.flush().unwrap();
    }
}

#[test]
fn acknowledged_labels_survive_kill() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.log");
    let mut child = Command::new(std::env::current_exe().unwrap())
        .args(["--exact", "child_writer", "--nocapture", "--test-threads=1"])
        .env(CHILD_ENV, &path)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut acked = Vec::new();
    for line in BufReader::new(child.stdout.take().unwrap()).lines() {
        let line = line.unwrap();
        if let Some(u) = line.strip_prefix("ack ") {
            acked.push(u.parse::<u64>().unwrap());
            if acked.len() == 40 {
                child.kill().unwrap();
                break;
            }
        }
    }
    child.wait().unwrap();
    assert_eq!(acked.len(), 40);
    let s = LabelStore::open(&path, speeches(100_000), StoreConfig { passes: 1, seed: 7 }).unwrap();
    let stored = s.export(Task::Topic);
    for u in acked {
        assert!(stored.contains_key(&u), "acknowledged label {u} lost");
    }
}
