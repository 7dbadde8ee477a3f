//! Core of the plenar pipeline: turning Bundestag plenary protocols into
//! attributed speeches, featurizing them, training and scoring topic and
//! sentiment classifiers, and aggregating predictions into trend tables.

pub mod artifact;
pub mod classifiers;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod labels;
pub mod parser;
pub mod party;
pub mod preprocess;
pub mod protocol;
pub mod speech;
pub mod tasks;
pub mod tfidf;
pub mod trends;

pub use error::{Error, Result};
pub use party::{Party, PartyMap};
pub use protocol::{ProtocolRef, RawProtocol};
pub use speech::{Sentiment, Speech, Topic};

/// Version string embedded in every artifact this crate writes.
pub const TOOL_VERSION: &str = concat!("plenar ", env!("CARGO_PKG_VERSION"));
