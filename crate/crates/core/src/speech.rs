//! The atomic corpus record and the two label vocabularies.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::party::Party;
use crate::{Error, Result};

/// One attributed speech. Field order is the JSON Lines column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speech {
    pub u_id: u64,
    pub session_id: String,
    pub date: NaiveDate,
    pub speaker: String,
    pub party: Party,
    pub position: String,
    pub text: String,
    /// Fewer than [`crate::parser::MIN_SPEECH_TOKENS`] tokens; kept in the
    /// corpus but excluded from training and prediction.
    #[serde(default)]
    pub short: bool,
}

/// The six topic classes, in their canonical order (class index 0..6,
/// displayed as 1..6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Topic {
    Environment,
    SocialAffairsEducation,
    EconomyFinance,
    ForeignSecurity,
    InfrastructureTransport,
    Health,
}

impl Topic {
    pub const ALL: [Topic; 6] = [
        Topic::Environment,
        Topic::SocialAffairsEducation,
        Topic::EconomyFinance,
        Topic::ForeignSecurity,
        Topic::InfrastructureTransport,
        Topic::Health,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topic::Environment => "Environment",
            Topic::SocialAffairsEducation => "Social Affairs and Education",
            Topic::EconomyFinance => "Economy and Finance",
            Topic::ForeignSecurity => "Foreign and Security Policy",
            Topic::InfrastructureTransport => "Infrastructure and Transport",
            Topic::Health => "Health",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Topic> {
        Topic::ALL.get(i).copied()
    }

    pub fn names() -> Vec<String> {
        Topic::ALL.iter().map(|t| t.name().to_string()).collect()
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topic::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown topic {s:?}")))
    }
}

impl Serialize for Topic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Topic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Binary tone of a speech. Serialized as -1 / +1; class index 0 / 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sentiment {
    Negative,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 2] = [Sentiment::Negative, Sentiment::Positive];

    pub fn value(self) -> i8 {
        match self {
            Sentiment::Negative => -1,
            Sentiment::Positive => 1,
        }
    }

    pub fn from_value(v: i64) -> Option<Sentiment> {
        match v {
            -1 => Some(Sentiment::Negative),
            1 => Some(Sentiment::Positive),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Sentiment> {
        Sentiment::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Sentiment::Negative => "negative",
            Sentiment::Positive => "positive",
        }
    }

    pub fn names() -> Vec<String> {
        Sentiment::ALL.iter().map(|s| s.name().to_string()).collect()
    }
}

impl Serialize for Sentiment {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Sentiment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Sentiment::from_value(v)
            .ok_or_else(|| serde::de::Error::custom(format!("sentiment must be -1 or 1, got {v}")))
    }
}
