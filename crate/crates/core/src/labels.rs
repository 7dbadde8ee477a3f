//! Classification tasks and the `{u_id, label}` JSON Lines files that carry
//! consensus labels between the annotation service and training.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifact::write_atomic;
use crate::speech::{Sentiment, Topic};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Topic,
    Sentiment,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Topic, Task::Sentiment];

    pub fn name(self) -> &'static str {
        match self {
            Task::Topic => "topic",
            Task::Sentiment => "sentiment",
        }
    }

    /// Class names in class-index order.
    pub fn label_names(self) -> Vec<String> {
        match self {
            Task::Topic => Topic::names(),
            Task::Sentiment => Sentiment::names(),
        }
    }

    /// Class index of a label as written in label files: the topic name, or
    /// -1 / 1 for sentiment.
    pub fn parse_label(self, v: &Value) -> Result<usize> {
        let bad = || Error::Validation(format!("invalid {} label {v}", self.name()));
        match self {
            Task::Topic => v.as_str().and_then(|s| s.parse::<Topic>().ok()).map(Topic::index).ok_or_else(bad),
            Task::Sentiment => v
                .as_i64()
                .and_then(Sentiment::from_value)
                .map(Sentiment::index)
                .ok_or_else(bad),
        }
    }

    pub fn label_value(self, class: usize) -> Value {
        match self {
            Task::Topic => Value::from(Topic::from_index(class).expect("topic index").name()),
            Task::Sentiment => Value::from(Sentiment::from_index(class).expect("sentiment index").value()),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topic" => Ok(Task::Topic),
            "sentiment" => Ok(Task::Sentiment),
            _ => Err(Error::Config(format!("unknown task {s:?} (expected topic or sentiment)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub u_id: u64,
    pub label: Value,
}

/// Parses a label file into `u_id → class index`. Duplicate ids are an error.
pub fn parse_labels(text: &str, task: Task) -> Result<BTreeMap<u64, usize>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: LabelRow = serde_json::from_str(line).map_err(|e| Error::json(format!("label line {}", i + 1), e))?;
        let class = task
            .parse_label(&row.label)
            .map_err(|e| Error::Validation(format!("label line {}: {e}", i + 1)))?;
        if out.insert(row.u_id, class).is_some() {
            return Err(Error::Validation(format!("label line {}: duplicate u_id {}", i + 1, row.u_id)));
        }
    }
    Ok(out)
}

pub fn read_labels(path: &Path, task: Task) -> Result<BTreeMap<u64, usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, task).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// JSON Lines sorted by u_id.
pub fn render_labels(labels: &BTreeMap<u64, usize>, task: Task) -> String {
    let mut out = String::new();
    for (&u_id, &class) in labels {
        let row = LabelRow {
            u_id,
            label: task.label_value(class),
        };
        out.push_str(&serde_json::to_string(&row).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn write_labels(path: &Path, labels: &BTreeMap<u64, usize>, task: Task) -> Result<()> {
    write_atomic(path, render_labels(labels, task).as_bytes())
}
