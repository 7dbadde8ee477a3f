//! On-disk protocol cache: `<root>/protocols/<dip_id>.json` per protocol with
//! a body checksum, and `<root>/index.json` recording the last listing.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use plenar_core::artifact::{read_json, sha256_hex, write_json_pretty};
use plenar_core::{ProtocolRef, RawProtocol};
use serde::{Deserialize, Serialize};

use crate::client::{Listing, ListedVersion, Superseded};
use crate::{IngestError, Result};

pub const INDEX_FORMAT_VERSION: u32 = 1;

/// Duplicate-version policy written into the index.
pub const RECONCILIATION_POLICY: &str = "latest aktualisiert per session_label";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheFile {
    dip_id: String,
    session_label: String,
    date: NaiveDate,
    body: String,
    checksum_sha256: String,
    fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub format_version: u32,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub num_found: u64,
    pub reconciliation: String,
    pub protocols: Vec<ListedVersion>,
    pub superseded: Vec<Superseded>,
}

impl CacheIndex {
    pub fn new(from: NaiveDate, to: NaiveDate, listing: &Listing) -> Self {
        Self {
            format_version: INDEX_FORMAT_VERSION,
            from,
            to,
            num_found: listing.num_found,
            reconciliation: RECONCILIATION_POLICY.to_string(),
            protocols: listing.protocols.clone(),
            superseded: listing.superseded.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolCache {
    root: PathBuf,
}

fn safe_id(dip_id: &str) -> Result<&str> {
    if dip_id.is_empty() || !dip_id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_') {
        return Err(IngestError::Config(format!("dip_id {dip_id:?} cannot be used as a file name")));
    }
    Ok(dip_id)
}

impl ProtocolCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn protocol_path(&self, dip_id: &str) -> Result<PathBuf> {
        Ok(self.root.join("protocols").join(format!("{}.json", safe_id(dip_id)?)))
    }

    pub fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn read_file(path: &Path) -> std::result::Result<RawProtocol, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let f: CacheFile = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let actual = sha256_hex(f.body.as_bytes());
        if actual != f.checksum_sha256 {
            return Err(format!("checksum mismatch (stored {}, actual {actual})", f.checksum_sha256));
        }
        let reference = ProtocolRef::new(f.dip_id, f.session_label, f.date).map_err(|e| e.to_string())?;
        Ok(RawProtocol {
            reference,
            body: f.body,
            fetched_at: f.fetched_at,
        })
    }

    /// The cached copy, or `None` when absent or corrupt (corruption is
    /// logged so the caller can refetch).
    pub fn get(&self, dip_id: &str) -> Result<Option<RawProtocol>> {
        let path = self.protocol_path(dip_id)?;
        if !path.exists() {
            return Ok(None);
        }
        match Self::read_file(&path) {
            Ok(p) if p.reference.dip_id == dip_id => Ok(Some(p)),
            Ok(p) => {
                log::warn!("{}: holds protocol {}; refetching", path.display(), p.reference.dip_id);
                Ok(None)
            }
            Err(e) => {
                log::warn!("{}: cache entry unusable ({e}); refetching", path.display());
                Ok(None)
            }
        }
    }

    pub fn put(&self, p: &RawProtocol) -> Result<PathBuf> {
        let path = self.protocol_path(&p.reference.dip_id)?;
        let file = CacheFile {
            dip_id: p.reference.dip_id.clone(),
            session_label: p.reference.session_label.clone(),
            date: p.reference.date,
            body: p.body.clone(),
            checksum_sha256: sha256_hex(p.body.as_bytes()),
            fetched_at: p.fetched_at,
        };
        write_json_pretty(&path, &file)?;
        Ok(path)
    }

    pub fn write_index(&self, index: &CacheIndex) -> Result<()> {
        Ok(write_json_pretty(&self.index_path(), index)?)
    }

    pub fn read_index(&self) -> Result<Option<CacheIndex>> {
        let path = self.index_path();
        if !path.exists() {
            return Ok(None);
        }
        let index: CacheIndex = read_json(&path)?;
        if index.format_version != INDEX_FORMAT_VERSION {
            return Err(plenar_core::Error::FormatVersion {
                what: path.display().to_string(),
                found: index.format_version,
                expected: INDEX_FORMAT_VERSION,
            }
            .into());
        }
        Ok(Some(index))
    }

    /// Every protocol of the last ingest (per the index; all cached files when
    /// there is none), date ascending then session. Corrupt entries are an
    /// error here: parsing must not silently skip protocols.
    pub fn load_all(&self) -> Result<Vec<RawProtocol>> {
        let ids: Vec<String> = match self.read_index()? {
            Some(index) => index.protocols.into_iter().map(|v| v.reference.dip_id).collect(),
            None => {
                let dir = self.root.join("protocols");
                let entries = std::fs::read_dir(&dir).map_err(|e| plenar_core::Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let mut ids: Vec<String> = entries
                    .filter_map(|e| e.ok())
                    .filter_map(|e| {
                        let name = e.file_name().to_string_lossy().into_owned();
                        name.strip_suffix(".json").filter(|s| !s.starts_with('.')).map(str::to_string)
                    })
                    .collect();
                ids.sort();
                ids
            }
        };
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let path = self.protocol_path(&id)?;
            let p = Self::read_file(&path).map_err(|e| {
                IngestError::Cache(format!("{}: {e}; re-run ingest to repair the cache", path.display()))
            })?;
            out.push(p);
        }
        out.sort_by_key(|p| (p.reference.date, p.reference.session_key().unwrap_or_default()));
        Ok(out)
    }
}
