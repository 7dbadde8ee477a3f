//! Append-only label log with a hash chain, and the consensus view derived
//! from it.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use plenar_core::artifact::sha256_hex;
use plenar_core::labels::{render_labels, Task};
use plenar_core::Speech;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{LabelError, Result};

/// Sentiment value recording that a speech is neutral and left out.
pub const SKIP_NEUTRAL: &str = "skip_neutral";

const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    First,
    Crosscheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub speech_u_id: u64,
    pub task: Task,
    /// As written in label files, or `"skip_neutral"` for sentiment.
    pub label: Value,
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
    pub pass: Pass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub speech_u_id: u64,
    pub task: Task,
    pub label: Value,
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Label(LabelRecord),
    Adjudication(Adjudication),
}

/// One log line. `hash` covers `prev`, `seq` and the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogEntry {
    seq: u64,
    prev: String,
    hash: String,
    event: Event,
}

fn chain_hash(prev: &str, seq: u64, event: &Event) -> String {
    let body = serde_json::to_string(event).expect("serializable");
    sha256_hex(format!("{prev}\n{seq}\n{body}").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Consensus {
    Unlabeled,
    PendingCrosscheck,
    Agreed { label: Value },
    Disagreement { first: Value, crosscheck: Value },
    /// Marked neutral; out of the sentiment pool and export.
    Excluded,
}

#[derive(Debug, Default, Clone)]
struct Cell {
    records: Vec<LabelRecord>,
    adjudication: Option<Adjudication>,
}

impl Cell {
    fn by_pass(&self, pass: Pass) -> Option<&LabelRecord> {
        self.records.iter().find(|r| r.pass == pass)
    }

    fn by_annotator(&self, annotator: &str) -> Option<&LabelRecord> {
        self.records.iter().find(|r| r.annotator == annotator)
    }

    fn consensus(&self, passes: u8) -> Consensus {
        if let Some(a) = &self.adjudication {
            return if is_skip(&a.label) {
                Consensus::Excluded
            } else {
                Consensus::Agreed { label: a.label.clone() }
            };
        }
        if self.records.iter().any(|r| is_skip(&r.label)) {
            return Consensus::Excluded;
        }
        match (self.by_pass(Pass::First), self.by_pass(Pass::Crosscheck)) {
            (None, None) => Consensus::Unlabeled,
            (Some(f), _) if passes == 1 => Consensus::Agreed { label: f.label.clone() },
            (Some(f), Some(c)) if f.label == c.label => Consensus::Agreed { label: f.label.clone() },
            (Some(f), Some(c)) => Consensus::Disagreement {
                first: f.label.clone(),
                crosscheck: c.label.clone(),
            },
            _ => Consensus::PendingCrosscheck,
        }
    }
}

fn is_skip(v: &Value) -> bool {
    v.as_str() == Some(SKIP_NEUTRAL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    /// 1 accepts single labels; 2 requires an agreeing crosscheck.
    pub passes: u8,
    /// Session seed for the order speeches are served in.
    pub seed: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { passes: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub u_id: u64,
    pub task: Task,
    pub label: Value,
    pub annotator: String,
    /// Assigned by the store when absent: first if free, else crosscheck.
    #[serde(default)]
    pub pass: Option<Pass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub record: LabelRecord,
    pub consensus: Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicateRequest {
    pub u_id: u64,
    pub task: Task,
    pub label: Value,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextSpeech {
    pub speech: Speech,
    pub task: Task,
    pub pass: Pass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub u_id: u64,
    pub task: Task,
    pub first: LabelRecord,
    pub crosscheck: LabelRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskProgress {
    /// Speeches that can be labeled (short ones are not served).
    pub pool: usize,
    pub unlabeled: usize,
    pub pending_crosscheck: usize,
    pub consensus: usize,
    pub disagreements: usize,
    pub excluded: usize,
    /// Records per annotator.
    pub by_annotator: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub passes: u8,
    pub records: u64,
    pub tasks: BTreeMap<Task, TaskProgress>,
}

pub struct LabelStore {
    path: PathBuf,
    file: File,
    config: StoreConfig,
    speeches: BTreeMap<u64, Speech>,
    cells: HashMap<(u64, Task), Cell>,
    seq: u64,
    last_hash: String,
}

impl LabelStore {
    /// Opens or creates the log, verifying the hash chain. A torn final line
    /// (a write that never completed, so was never acknowledged) is cut off;
    /// any other damage is an error.
    pub fn open(path: &Path, speeches: Vec<Speech>, config: StoreConfig) -> Result<Self> {
        if !(1..=2).contains(&config.passes) {
            return Err(LabelError::BadRequest(format!("passes must be 1 or 2, got {}", config.passes)));
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| LabelError::io(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| LabelError::io(path, e))?;
        let mut store = Self {
            path: path.to_path_buf(),
            file: file.try_clone().map_err(|e| LabelError::io(path, e))?,
            config,
            speeches: speeches.into_iter().map(|s| (s.u_id, s)).collect(),
            cells: HashMap::new(),
            seq: 0,
            last_hash: GENESIS.to_string(),
        };
        file.seek(SeekFrom::Start(0)).map_err(|e| LabelError::io(path, e))?;
        let mut reader = BufReader::new(&file);
        let mut good_len = 0u64;
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| LabelError::io(path, e))?;
            if n == 0 {
                break;
            }
            lineno += 1;
            let complete = line.ends_with('\n');
            match serde_json::from_str::<LogEntry>(line.trim_end()) {
                Ok(entry) if complete => {
                    store.replay(entry, lineno)?;
                    good_len += n as u64;
                }
                _ if !complete => {
                    log::warn!("{}: dropping incomplete final line {lineno}", path.display());
                    break;
                }
                Err(e) => return Err(LabelError::Corrupt(format!("{} line {lineno}: {e}", path.display()))),
                Ok(_) => unreachable!(),
            }
        }
        drop(reader);
        if file.metadata().map_err(|e| LabelError::io(path, e))?.len() != good_len {
            file.set_len(good_len).map_err(|e| LabelError::io(path, e))?;
        }
        Ok(store)
    }

    fn replay(&mut self, entry: LogEntry, lineno: usize) -> Result<()> {
        let bad = |m: &str| LabelError::Corrupt(format!("line {lineno}: {m}"));
        if entry.seq != self.seq + 1 {
            return Err(bad(&format!("sequence {} follows {}", entry.seq, self.seq)));
        }
        if entry.prev != self.last_hash {
            return Err(bad("hash chain broken: prev does not match the preceding entry"));
        }
        if chain_hash(&entry.prev, entry.seq, &entry.event) != entry.hash {
            return Err(bad("entry hash does not match its contents"));
        }
        self.seq = entry.seq;
        self.last_hash = entry.hash;
        self.apply(entry.event);
        Ok(())
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::Label(r) => self.cells.entry((r.speech_u_id, r.task)).or_default().records.push(r),
            Event::Adjudication(a) => {
                let key = (a.speech_u_id, a.task);
                self.cells.entry(key).or_default().adjudication = Some(a);
            }
        }
    }

    /// Writes and fsyncs one entry before the in-memory state changes.
    fn append(&mut self, event: Event) -> Result<()> {
        let seq = self.seq + 1;
        let hash = chain_hash(&self.last_hash, seq, &event);
        let entry = LogEntry {
            seq,
            prev: self.last_hash.clone(),
            hash: hash.clone(),
            event,
        };
        let mut line = serde_json::to_string(&entry).expect("serializable");
        line.push('\n');
        let path = self.path.clone();
        self.file.write_all(line.as_bytes()).map_err(|e| LabelError::io(&path, e))?;
        self.file.sync_data().map_err(|e| LabelError::io(&path, e))?;
        self.seq = seq;
        self.last_hash = hash;
        self.apply(entry.event);
        Ok(())
    }

    pub fn config(&self) -> StoreConfig {
        self.config
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record_count(&self) -> u64 {
        self.seq
    }

    pub fn speech(&self, u_id: u64) -> Option<&Speech> {
        self.speeches.get(&u_id)
    }

    pub fn consensus(&self, u_id: u64, task: Task) -> Consensus {
        self.cells
            .get(&(u_id, task))
            .map(|c| c.consensus(self.config.passes))
            .unwrap_or(Consensus::Unlabeled)
    }

    fn validate_label(task: Task, label: &Value) -> Result<()> {
        if is_skip(label) {
            return match task {
                Task::Sentiment => Ok(()),
                Task::Topic => Err(LabelError::BadRequest("skip_neutral only applies to sentiment".into())),
            };
        }
        task.parse_label(label).map(|_| ()).map_err(|e| LabelError::BadRequest(e.to_string()))
    }

    fn check_target(&self, u_id: u64, annotator: &str, task: Task, label: &Value) -> Result<()> {
        if annotator.trim().is_empty() {
            return Err(LabelError::BadRequest("annotator id is empty".into()));
        }
        if !self.speeches.contains_key(&u_id) {
            return Err(LabelError::NotFound(format!("no speech with u_id {u_id}")));
        }
        Self::validate_label(task, label)
    }

    pub fn submit(&mut self, req: SubmitRequest) -> Result<SubmitResponse> {
        self.check_target(req.u_id, &req.annotator, req.task, &req.label)?;
        let cell = self.cells.get(&(req.u_id, req.task)).cloned().unwrap_or_default();
        let pass = match req.pass {
            Some(p) => p,
            None if self.config.passes == 1 || cell.by_pass(Pass::First).is_none() => Pass::First,
            None => Pass::Crosscheck,
        };
        if pass == Pass::Crosscheck && self.config.passes == 1 {
            return Err(LabelError::BadRequest("crosscheck is disabled (single-pass store)".into()));
        }
        if let Some(r) = cell.by_annotator(&req.annotator) {
            return Err(LabelError::Conflict(format!(
                "{} already labeled speech {} for {} ({:?} pass)",
                req.annotator, req.u_id, req.task, r.pass
            )));
        }
        if let Some(r) = cell.by_pass(pass) {
            return Err(LabelError::Conflict(format!(
                "the {pass:?} pass for speech {} {} is already recorded by {}",
                req.u_id, req.task, r.annotator
            )));
        }
        match cell.consensus(self.config.passes) {
            Consensus::Unlabeled | Consensus::PendingCrosscheck => {}
            other => {
                return Err(LabelError::Conflict(format!(
                    "speech {} {} needs no further labels ({})",
                    req.u_id,
                    req.task,
                    serde_json::to_value(&other).expect("serializable")["state"]
                )))
            }
        }
        if pass == Pass::Crosscheck && cell.by_pass(Pass::First).is_none() {
            return Err(LabelError::Conflict(format!(
                "speech {} {} has no first-pass label to crosscheck",
                req.u_id, req.task
            )));
        }
        let record = LabelRecord {
            speech_u_id: req.u_id,
            task: req.task,
            label: req.label,
            annotator: req.annotator,
            timestamp: Utc::now(),
            pass,
        };
        self.append(Event::Label(record.clone()))?;
        Ok(SubmitResponse {
            consensus: self.consensus(record.speech_u_id, record.task),
            record,
        })
    }

    pub fn adjudicate(&mut self, req: AdjudicateRequest) -> Result<Consensus> {
        self.check_target(req.u_id, &req.annotator, req.task, &req.label)?;
        if !matches!(self.consensus(req.u_id, req.task), Consensus::Disagreement { .. }) {
            return Err(LabelError::Conflict(format!(
                "speech {} {} is not in disagreement",
                req.u_id, req.task
            )));
        }
        self.append(Event::Adjudication(Adjudication {
            speech_u_id: req.u_id,
            task: req.task,
            label: req.label,
            annotator: req.annotator,
            timestamp: Utc::now(),
        }))?;
        Ok(self.consensus(req.u_id, req.task))
    }

    fn permutation(&self, task: Task, annotator: &str) -> Vec<u64> {
        let digest = sha256_hex(format!("{}\n{task}\n{annotator}", self.config.seed).as_bytes());
        let seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        let mut ids: Vec<u64> = self.speeches.values().filter(|s| !s.short).map(|s| s.u_id).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        ids
    }

    /// Next speech for this annotator in a seeded random order, preferring
    /// speeches waiting for a crosscheck by someone else.
    pub fn next_speech(&self, task: Task, annotator: &str) -> Result<Option<NextSpeech>> {
        if annotator.trim().is_empty() {
            return Err(LabelError::BadRequest("annotator id is empty".into()));
        }
        let mut fresh = None;
        for u_id in self.permutation(task, annotator) {
            let cell = self.cells.get(&(u_id, task));
            if cell.is_some_and(|c| c.by_annotator(annotator).is_some()) {
                continue;
            }
            match self.consensus(u_id, task) {
                Consensus::PendingCrosscheck => {
                    return Ok(Some(NextSpeech {
                        speech: self.speeches[&u_id].clone(),
                        task,
                        pass: Pass::Crosscheck,
                    }))
                }
                Consensus::Unlabeled if fresh.is_none() => fresh = Some(u_id),
                _ => {}
            }
        }
        Ok(fresh.map(|u_id| NextSpeech {
            speech: self.speeches[&u_id].clone(),
            task,
            pass: Pass::First,
        }))
    }

    pub fn disagreements(&self) -> Vec<Disagreement> {
        let mut out: Vec<Disagreement> = self
            .cells
            .iter()
            .filter(|(&(u, t), _)| matches!(self.consensus(u, t), Consensus::Disagreement { .. }))
            .map(|(&(u_id, task), c)| Disagreement {
                u_id,
                task,
                first: c.by_pass(Pass::First).expect("first").clone(),
                crosscheck: c.by_pass(Pass::Crosscheck).expect("crosscheck").clone(),
            })
            .collect();
        out.sort_by_key(|d| (d.task, d.u_id));
        out
    }

    pub fn progress(&self) -> Progress {
        let pool = self.speeches.values().filter(|s| !s.short).count();
        let mut tasks = BTreeMap::new();
        for task in Task::ALL {
            let mut p = TaskProgress {
                pool,
                ..TaskProgress::default()
            };
            let mut touched = 0;
            for (&(u_id, t), cell) in &self.cells {
                if t != task {
                    continue;
                }
                touched += 1;
                for r in &cell.records {
                    *p.by_annotator.entry(r.annotator.clone()).or_default() += 1;
                }
                match self.consensus(u_id, task) {
                    Consensus::Unlabeled => p.unlabeled += 1,
                    Consensus::PendingCrosscheck => p.pending_crosscheck += 1,
                    Consensus::Agreed { .. } => p.consensus += 1,
                    Consensus::Disagreement { .. } => p.disagreements += 1,
                    Consensus::Excluded => p.excluded += 1,
                }
            }
            p.unlabeled += pool.saturating_sub(touched);
            tasks.insert(task, p);
        }
        Progress {
            passes: self.config.passes,
            records: self.seq,
            tasks,
        }
    }

    /// Consensus labels as class indices; excluded and open items left out.
    pub fn export(&self, task: Task) -> BTreeMap<u64, usize> {
        self.cells
            .keys()
            .filter(|(_, t)| *t == task)
            .filter_map(|&(u_id, _)| match self.consensus(u_id, task) {
                Consensus::Agreed { label } => Some((u_id, task.parse_label(&label).expect("validated on submit"))),
                _ => None,
            })
            .collect()
    }

    /// Export rendered as `{u_id, label}` JSON Lines sorted by u_id.
    pub fn export_jsonl(&self, task: Task) -> (String, usize) {
        let labels = self.export(task);
        (render_labels(&labels, task), labels.len())
    }
}
