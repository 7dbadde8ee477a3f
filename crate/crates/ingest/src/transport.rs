//! HTTP abstraction: a real ureq-backed transport and a fixture-backed one
//! that answers DIP queries from a directory of document files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

/// A response as far as the client cares: status and body text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Connection-level failure (no HTTP status available).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    /// GET `url` with query parameters; `authorization` is the full header
    /// value. Non-2xx statuses are responses, not errors.
    fn get(&self, url: &str, query: &[(&str, String)], authorization: &str) -> Result<HttpResponse, TransportError>;
}

const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("plenar/", env!("CARGO_PKG_VERSION")))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, query: &[(&str, String)], authorization: &str) -> Result<HttpResponse, TransportError> {
        let mut req = self.agent.get(url).header("Accept", "application/json");
        if !authorization.is_empty() {
            req = req.header("Authorization", authorization);
        }
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let mut resp = req.call().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Serves `<dir>/<id>.json` DIP documents through the list and text
/// endpoints, paging `page_size` documents per cursor step. Counts requests
/// and can be told to fail the next few with a given status.
pub struct FixtureTransport {
    docs: BTreeMap<String, Value>,
    page_size: usize,
    requests: AtomicUsize,
    failures: Mutex<Vec<u16>>,
    log: Mutex<Vec<String>>,
}

impl FixtureTransport {
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut docs = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let v: Value = serde_json::from_str(&std::fs::read_to_string(&p)?)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))?;
            let id = v.get("id").and_then(Value::as_str).unwrap_or_default().to_string();
            docs.insert(id, v);
        }
        Ok(Self::from_documents(docs.into_values()))
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Value>) -> Self {
        Self {
            docs: docs
                .into_iter()
                .map(|d| (d.get("id").and_then(Value::as_str).unwrap_or_default().to_string(), d))
                .collect(),
            page_size: 100,
            requests: AtomicUsize::new(0),
            failures: Mutex::new(Vec::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_page_size(mut self, n: usize) -> Self {
        self.page_size = n.max(1);
        self
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Paths of all requests so far.
    pub fn requested_paths(&self) -> Vec<String> {
        self.log.lock().expect("log lock").clone()
    }

    /// The next requests answer with these statuses, in order.
    pub fn fail_next(&self, statuses: &[u16]) {
        self.failures.lock().expect("failure lock").extend(statuses.iter().rev());
    }

    fn list(&self, query: &[(&str, String)]) -> HttpResponse {
        let q = |k: &str| query.iter().find(|(n, _)| *n == k).map(|(_, v)| v.as_str());
        let (start, end) = (q("f.datum.start").unwrap_or(""), q("f.datum.end").unwrap_or("\u{10FFFF}"));
        let mut matching: Vec<&Value> = self
            .docs
            .values()
            .filter(|d| {
                let date = d.get("datum").and_then(Value::as_str).unwrap_or_default();
                date >= start && date <= end
            })
            .collect();
        // Newest first, like the live API.
        matching.sort_by(|a, b| b["datum"].as_str().cmp(&a["datum"].as_str()));
        let offset: usize = q("cursor").and_then(|c| c.parse().ok()).unwrap_or(0);
        let page: Vec<Value> = matching
            .iter()
            .skip(offset)
            .take(self.page_size)
            .map(|d| {
                let mut meta = (*d).clone();
                if let Some(o) = meta.as_object_mut() {
                    o.remove("text");
                }
                meta
            })
            .collect();
        let next = (offset + page.len()).to_string();
        HttpResponse {
            status: 200,
            body: json!({"numFound": matching.len(), "documents": page, "cursor": next}).to_string(),
        }
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &str, query: &[(&str, String)], _authorization: &str) -> Result<HttpResponse, TransportError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let path = url.split_once("/api/v1/").map(|(_, p)| p).unwrap_or(url).to_string();
        self.log.lock().expect("log lock").push(path.clone());
        if let Some(status) = self.failures.lock().expect("failure lock").pop() {
            return Ok(HttpResponse {
                status,
                body: String::new(),
            });
        }
        if path == "plenarprotokoll" {
            return Ok(self.list(query));
        }
        if let Some(id) = path.strip_prefix("plenarprotokoll-text/") {
            return Ok(match self.docs.get(id) {
                Some(d) => HttpResponse {
                    status: 200,
                    body: d.to_string(),
                },
                None => HttpResponse {
                    status: 404,
                    body: json!({"code": 404, "message": "Not Found"}).to_string(),
                },
            });
        }
        Ok(HttpResponse {
            status: 404,
            body: String::new(),
        })
    }
}
