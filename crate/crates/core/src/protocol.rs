//! Plenary protocol references and downloaded protocol text.

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pointer to one plenary protocol in the DIP document store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolRef {
    pub dip_id: String,
    /// "LL/NNN": legislature and session number.
    pub session_label: String,
    pub date: NaiveDate,
}

impl ProtocolRef {
    pub fn new(dip_id: impl Into<String>, session_label: impl Into<String>, date: NaiveDate) -> Result<Self> {
        let r = Self {
            dip_id: dip_id.into(),
            session_label: session_label.into(),
            date,
        };
        r.session_key()?;
        Ok(r)
    }

    /// (legislature, session) parsed from the label; the label must be `\d+/\d+`.
    pub fn session_key(&self) -> Result<(u32, u32)> {
        parse_session_label(&self.session_label)
    }
}

pub fn parse_session_label(label: &str) -> Result<(u32, u32)> {
    let bad = || Error::Validation(format!("session label {label:?} is not of the form LL/NNN"));
    let (ll, nnn) = label.split_once('/').ok_or_else(bad)?;
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(ll) || !all_digits(nnn) {
        return Err(bad());
    }
    Ok((ll.parse().map_err(|_| bad())?, nnn.parse().map_err(|_| bad())?))
}

/// Full text of one protocol as served by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawProtocol {
    #[serde(flatten)]
    pub reference: ProtocolRef,
    pub body: String,
    pub fetched_at: DateTime<Utc>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_labels() {
        assert_eq!(parse_session_label("19/125").unwrap(), (19, 125));
        assert_eq!(parse_session_label("20/7").unwrap(), (20, 7));
        for bad in ["19-125", "/3", "19/", "a/1", "19/12 ", "19/1/2"] {
            assert!(parse_session_label(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn ref_validates_label() {
        let d = NaiveDate::from_ymd_opt(2019, 11, 8).unwrap();
        assert!(ProtocolRef::new("4352", "19/125", d).is_ok());
        assert!(ProtocolRef::new("4352", "Sitzung 125", d).is_err());
    }
}
