//! Downloading plenary protocols from the Bundestag DIP API into a local
//! cache that the rest of the pipeline reads.

pub mod cache;
pub mod client;
pub mod transport;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::NaiveDate;
use plenar_core::{ProtocolRef, RawProtocol};

pub use cache::{CacheIndex, ProtocolCache};
pub use client::{ApiKey, ClientConfig, DipClient, Listing};
pub use transport::{FixtureTransport, HttpResponse, Transport, TransportError, UreqTransport};

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("the DIP API rejected the API key (HTTP {status}); check DIP_API_KEY")]
    Credential { status: u16 },

    #[error("protocol {dip_id} does not exist on the DIP API (HTTP 404)")]
    MissingDocument { dip_id: String },

    #[error("request to {endpoint} failed after {attempts} attempt(s): {message}")]
    Retriable {
        endpoint: String,
        attempts: u32,
        message: String,
    },

    #[error("unexpected HTTP {status} from {endpoint}")]
    Http { endpoint: String, status: u16 },

    #[error("malformed DIP payload, field {field}: {message}")]
    Parse { field: String, message: String },

    #[error("the API reported {reported} protocols for the query but returned {received}")]
    Incomplete { reported: u64, received: u64 },

    #[error("no DIP API key: set DIP_API_KEY or api_key in the config file, or use --offline")]
    MissingKey,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Core(#[from] plenar_core::Error),
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn get(&self, url: &str, query: &[(&str, String)], authorization: &str) -> Result<HttpResponse, TransportError> {
        (**self).get(url, query, authorization)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn get(&self, url: &str, query: &[(&str, String)], authorization: &str) -> Result<HttpResponse, TransportError> {
        (**self).get(url, query, authorization)
    }
}

/// A client answering from a fixture directory with no pacing.
pub fn offline_client(fixture_dir: &Path) -> Result<DipClient<FixtureTransport>> {
    let transport = FixtureTransport::from_dir(fixture_dir).map_err(|e| plenar_core::Error::Io {
        path: fixture_dir.to_path_buf(),
        source: e,
    })?;
    let config = ClientConfig {
        base_url: "offline:/api/v1".into(),
        min_interval: std::time::Duration::ZERO,
        backoff_base: std::time::Duration::ZERO,
        ..ClientConfig::default()
    };
    Ok(DipClient::new(transport, ApiKey::new(""), config))
}

/// The cached protocol when intact, else a fresh download written to the
/// cache. Returns whether the network was used.
pub fn fetch_protocol<T: Transport>(
    client: &DipClient<T>,
    cache: &ProtocolCache,
    reference: &ProtocolRef,
) -> Result<(RawProtocol, bool)> {
    if let Some(p) = cache.get(&reference.dip_id)? {
        if p.reference == *reference {
            return Ok((p, false));
        }
        log::warn!("cached {} has stale metadata; refetching", reference.dip_id);
    }
    let p = client.fetch_text(reference)?;
    cache.put(&p)?;
    Ok((p, true))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub refs: Vec<ProtocolRef>,
    pub downloaded: usize,
    pub from_cache: usize,
    pub superseded: usize,
}

/// Lists the range, fetches every protocol not already cached using up to
/// `workers` threads, and records the listing in the cache index.
pub fn ingest<T: Transport>(
    client: &DipClient<T>,
    cache: &ProtocolCache,
    from: NaiveDate,
    to: NaiveDate,
    workers: usize,
) -> Result<IngestReport> {
    let listing = client.list_protocols(from, to)?;
    let refs = listing.refs();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<bool>>>> = Mutex::new((0..refs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, refs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(r) = refs.get(i) else { break };
                let outcome = fetch_protocol(client, cache, r).map(|(_, downloaded)| downloaded);
                let failed = outcome.is_err();
                results.lock().expect("results lock")[i] = Some(outcome);
                if failed {
                    // Stop handing out work; in-flight fetches finish.
                    next.store(refs.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
    });
    let mut downloaded = 0;
    let mut from_cache = 0;
    for r in results.into_inner().expect("results lock").into_iter().flatten() {
        if r? {
            downloaded += 1;
        } else {
            from_cache += 1;
        }
    }
    cache.write_index(&CacheIndex::new(from, to, &listing))?;
    log::info!(
        "{} protocols in range: {downloaded} downloaded, {from_cache} from cache",
        refs.len()
    );
    Ok(IngestReport {
        superseded: listing.superseded.len(),
        refs,
        downloaded,
        from_cache,
    })
}
