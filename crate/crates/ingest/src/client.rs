//! DIP API client: listing plenary protocols in a date range and fetching
//! their text, with request pacing and retry with exponential backoff.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, Utc};
use plenar_core::{ProtocolRef, RawProtocol};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::transport::{HttpResponse, Transport};
use crate::{IngestError, Result};

pub const DEFAULT_BASE_URL: &str = "https://search.dip.bundestag.de/api/v1";
pub const API_KEY_ENV: &str = "DIP_API_KEY";

/// Never printed; `Debug` is redacted.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    /// `DIP_API_KEY` if set and non-empty, else the configured fallback.
    pub fn resolve(configured: Option<&str>) -> Result<Self> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .or_else(|| configured.map(str::to_string).filter(|k| !k.trim().is_empty()))
            .map(ApiKey)
            .ok_or(IngestError::MissingKey)
    }

    fn header(&self) -> String {
        format!("ApiKey {}", self.0)
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub base_url: String,
    /// Minimum gap between the starts of two requests.
    #[serde(with = "millis")]
    pub min_interval: Duration,
    /// Retries after the first attempt on 429, 5xx and connection errors.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    #[serde(with = "millis")]
    pub backoff_base: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            min_interval: Duration::from_millis(200),
            max_retries: 5,
            backoff_base: Duration::from_millis(1000),
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// A listed protocol version, before duplicate reconciliation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListedVersion {
    pub reference: ProtocolRef,
    /// Last-modified stamp as served; empty when absent.
    pub aktualisiert: String,
}

/// A version dropped because a newer one shares its session label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Superseded {
    pub dip_id: String,
    pub session_label: String,
    pub aktualisiert: String,
    pub kept_dip_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Listing {
    /// Date ascending, then session number.
    pub protocols: Vec<ListedVersion>,
    /// Total reported by the API for the query.
    pub num_found: u64,
    pub superseded: Vec<Superseded>,
}

impl Listing {
    pub fn refs(&self) -> Vec<ProtocolRef> {
        self.protocols.iter().map(|v| v.reference.clone()).collect()
    }
}

pub struct DipClient<T> {
    transport: T,
    key: ApiKey,
    config: ClientConfig,
    last_request: Mutex<Option<Instant>>,
}

enum Outcome {
    Ok(Value),
    NotFound,
}

fn parse_err(field: &str, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        field: field.to_string(),
        message: message.into(),
    }
}

/// String field that the API sometimes serves as a number.
fn text_field(doc: &Value, field: &str) -> Result<String> {
    match doc.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(parse_err(field, format!("expected a string, got {other}"))),
        None => Err(parse_err(field, "missing")),
    }
}

fn date_field(doc: &Value, field: &str) -> Result<NaiveDate> {
    let s = text_field(doc, field)?;
    s.parse().map_err(|e| parse_err(field, format!("{s:?} is not a YYYY-MM-DD date: {e}")))
}

fn reference(doc: &Value) -> Result<ProtocolRef> {
    let dip_id = text_field(doc, "id")?;
    let label = text_field(doc, "dokumentnummer")?;
    let date = date_field(doc, "datum")?;
    ProtocolRef::new(dip_id, label, date).map_err(|e| parse_err("dokumentnummer", e.to_string()))
}

/// Orders versions of the same session: later `aktualisiert` wins, then the
/// larger id, so reconciliation never depends on response order.
fn version_key(v: &ListedVersion) -> (Option<DateTime<chrono::FixedOffset>>, &str, usize, &str) {
    let stamp = DateTime::parse_from_rfc3339(&v.aktualisiert).ok();
    (stamp, v.aktualisiert.as_str(), v.reference.dip_id.len(), v.reference.dip_id.as_str())
}

/// Keeps the latest version per session label, sorted by date then session.
pub fn reconcile(versions: Vec<ListedVersion>) -> (Vec<ListedVersion>, Vec<Superseded>) {
    let mut by_label: BTreeMap<String, Vec<ListedVersion>> = BTreeMap::new();
    for v in versions {
        by_label.entry(v.reference.session_label.clone()).or_default().push(v);
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (_, mut vs) in by_label {
        vs.sort_by(|a, b| version_key(a).cmp(&version_key(b)));
        let winner = vs.pop().expect("non-empty group");
        for v in vs {
            dropped.push(Superseded {
                dip_id: v.reference.dip_id,
                session_label: v.reference.session_label,
                aktualisiert: v.aktualisiert,
                kept_dip_id: winner.reference.dip_id.clone(),
            });
        }
        kept.push(winner);
    }
    kept.sort_by_key(|v| {
        let session = v.reference.session_key().expect("validated label");
        (v.reference.date, session)
    });
    (kept, dropped)
}

impl<T: Transport> DipClient<T> {
    pub fn new(transport: T, key: ApiKey, config: ClientConfig) -> Self {
        Self {
            transport,
            key,
            config,
            last_request: Mutex::new(None),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn pace(&self) {
        let mut last = self.last_request.lock().expect("pacing lock");
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < self.config.min_interval {
                std::thread::sleep(self.config.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn get(&self, path: &str, query: &[(&str, String)]) -> Result<Outcome> {
        let url = format!("{}/{path}", self.config.base_url.trim_end_matches('/'));
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            self.pace();
            let failure = match self.transport.get(&url, query, &self.key.header()) {
                Ok(HttpResponse { status, body }) => match status {
                    200..=299 => {
                        return serde_json::from_str(&body)
                            .map(Outcome::Ok)
                            .map_err(|e| parse_err("<response body>", e.to_string()));
                    }
                    401 | 403 => return Err(IngestError::Credential { status }),
                    404 => return Ok(Outcome::NotFound),
                    429 | 500..=599 => format!("HTTP {status}"),
                    _ => {
                        return Err(IngestError::Http {
                            endpoint: path.to_string(),
                            status,
                        })
                    }
                },
                Err(e) => e.0,
            };
            if attempts > self.config.max_retries {
                return Err(IngestError::Retriable {
                    endpoint: path.to_string(),
                    attempts,
                    message: failure,
                });
            }
            let delay = self.config.backoff_base.saturating_mul(1 << (attempts - 1).min(16));
            log::warn!("{path}: {failure}; retrying in {delay:?} (attempt {attempts})");
            std::thread::sleep(delay);
        }
    }

    /// All plenary protocols dated within `[from, to]`, pages drained,
    /// duplicate versions reconciled.
    pub fn list_protocols(&self, from: NaiveDate, to: NaiveDate) -> Result<Listing> {
        if from > to {
            return Err(IngestError::Config(format!("date range is empty: {from} is after {to}")));
        }
        let mut versions = Vec::new();
        let mut cursor: Option<String> = None;
        let mut num_found: u64;
        loop {
            let mut query = vec![
                ("f.datum.start", from.to_string()),
                ("f.datum.end", to.to_string()),
                ("f.zuordnung", "BT".to_string()),
                ("format", "json".to_string()),
            ];
            if let Some(c) = &cursor {
                query.push(("cursor", c.clone()));
            }
            let page = match self.get("plenarprotokoll", &query)? {
                Outcome::Ok(v) => v,
                Outcome::NotFound => {
                    return Err(IngestError::Http {
                        endpoint: "plenarprotokoll".into(),
                        status: 404,
                    })
                }
            };
            num_found = page
                .get("numFound")
                .and_then(Value::as_u64)
                .ok_or_else(|| parse_err("numFound", "missing or not an unsigned integer"))?;
            let docs = page
                .get("documents")
                .and_then(Value::as_array)
                .ok_or_else(|| parse_err("documents", "missing or not an array"))?;
            for doc in docs {
                versions.push(ListedVersion {
                    reference: reference(doc)?,
                    aktualisiert: doc.get("aktualisiert").and_then(Value::as_str).unwrap_or_default().to_string(),
                });
            }
            let next = page.get("cursor").and_then(Value::as_str).map(str::to_string);
            let exhausted = docs.is_empty() || next.is_none() || next == cursor || versions.len() as u64 >= num_found;
            cursor = next;
            if exhausted {
                break;
            }
        }
        if versions.len() as u64 != num_found {
            return Err(IngestError::Incomplete {
                reported: num_found,
                received: versions.len() as u64,
            });
        }
        let (protocols, superseded) = reconcile(versions);
        for s in &superseded {
            log::info!(
                "session {} has several versions; keeping {} over {}",
                s.session_label,
                s.kept_dip_id,
                s.dip_id
            );
        }
        Ok(Listing {
            protocols,
            num_found,
            superseded,
        })
    }

    /// Downloads one protocol's full text.
    pub fn fetch_text(&self, reference: &ProtocolRef) -> Result<RawProtocol> {
        let path = format!("plenarprotokoll-text/{}", reference.dip_id);
        let doc = match self.get(&path, &[("format", "json".to_string())])? {
            Outcome::Ok(v) => v,
            Outcome::NotFound => {
                return Err(IngestError::MissingDocument {
                    dip_id: reference.dip_id.clone(),
                })
            }
        };
        let body = match doc.get("text") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::String(_)) => return Err(parse_err("text", "empty protocol text")),
            Some(other) => return Err(parse_err("text", format!("expected a string, got {}", type_name(other)))),
            None => return Err(parse_err("text", "missing")),
        };
        Ok(RawProtocol {
            reference: reference.clone(),
            body,
            fetched_at: Utc::now(),
        })
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}
