//! Canonical Bundestag party groups and the editable surface-form map.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A parliamentary group as it appears in the corpus. CDU and CSU sit as one
/// joint group and are never separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    #[serde(rename = "CDU/CSU")]
    CduCsu,
    #[serde(rename = "SPD")]
    Spd,
    #[serde(rename = "Bündnis 90/Die Grünen")]
    Gruene,
    #[serde(rename = "FDP")]
    Fdp,
    #[serde(rename = "AfD")]
    Afd,
    #[serde(rename = "Die Linke")]
    Linke,
    #[serde(rename = "BSW")]
    Bsw,
    #[serde(rename = "Fraktionslos")]
    Fraktionslos,
    #[serde(rename = "Unknown")]
    Unknown,
}

impl Party {
    pub const ALL: [Party; 9] = [
        Party::CduCsu,
        Party::Spd,
        Party::Gruene,
        Party::Fdp,
        Party::Afd,
        Party::Linke,
        Party::Bsw,
        Party::Fraktionslos,
        Party::Unknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Party::CduCsu => "CDU/CSU",
            Party::Spd => "SPD",
            Party::Gruene => "Bündnis 90/Die Grünen",
            Party::Fdp => "FDP",
            Party::Afd => "AfD",
            Party::Linke => "Die Linke",
            Party::Bsw => "BSW",
            Party::Fraktionslos => "Fraktionslos",
            Party::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Party::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Validation(format!("not a canonical party name: {s:?}")))
    }
}

/// Surface form → canonical party lookup. Keys are compared after
/// whitespace collapsing and case folding, so "DIE LINKE" and "Die Linke"
/// hit the same entry.
#[derive(Debug, Clone, Default)]
pub struct PartyMap {
    forms: HashMap<String, Party>,
}

fn normalize_form(raw: &str) -> String {
    let collapsed: String = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace(" / ", "/");
    collapsed.to_lowercase()
}

impl PartyMap {
    /// Parses the JSON object of `"surface form": "canonical name"` pairs.
    pub fn from_json(json: &str) -> Result<Self> {
        let pairs: HashMap<String, String> =
            serde_json::from_str(json).map_err(|e| Error::json("party map", e))?;
        let mut forms = HashMap::with_capacity(pairs.len());
        for (surface, canonical) in pairs {
            let party: Party = canonical.parse()?;
            forms.insert(normalize_form(&surface), party);
        }
        Ok(Self { forms })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The map shipped in `resources/party_map.json`.
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../../resources/party_map.json"))
            .expect("bundled party map is valid")
    }

    /// Maps a surface form to its party; anything unmapped is [`Party::Unknown`].
    pub fn canonicalize(&self, raw_name: &str) -> Party {
        self.forms
            .get(&normalize_form(raw_name))
            .copied()
            .unwrap_or(Party::Unknown)
    }
}

/// Free-function form of [`PartyMap::canonicalize`].
pub fn canonicalize_party(raw_name: &str, party_map: &PartyMap) -> Party {
    party_map.canonicalize(raw_name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csu_joins_the_joint_group() {
        let map = PartyMap::bundled();
        assert_eq!(map.canonicalize("CSU"), Party::CduCsu);
        assert_eq!(map.canonicalize("CDU"), Party::CduCsu);
        assert_eq!(map.canonicalize("CDU/CSU"), Party::CduCsu);
    }

    #[test]
    fn surface_forms_are_case_and_space_insensitive() {
        let map = PartyMap::bundled();
        assert_eq!(map.canonicalize("AfD"), Party::Afd);
        assert_eq!(map.canonicalize("DIE LINKE"), Party::Linke);
        assert_eq!(map.canonicalize("BÜNDNIS 90/DIE GRÜNEN"), Party::Gruene);
        assert_eq!(map.canonicalize("  BÜNDNIS 90 / DIE  GRÜNEN "), Party::Gruene);
        assert_eq!(map.canonicalize("fraktionslos"), Party::Fraktionslos);
        assert_eq!(map.canonicalize("BSW"), Party::Bsw);
    }

    #[test]
    fn unmapped_names_fall_back_to_unknown() {
        assert_eq!(canonicalize_party("Gast", &PartyMap::bundled()), Party::Unknown);
        assert_eq!(PartyMap::default().canonicalize("SPD"), Party::Unknown);
    }

    #[test]
    fn rejects_non_canonical_targets() {
        assert!(PartyMap::from_json(r#"{"X": "Piraten"}"#).is_err());
    }

    #[test]
    fn serde_uses_canonical_names() {
        assert_eq!(serde_json::to_string(&Party::Gruene).unwrap(), "\"Bündnis 90/Die Grünen\"");
        let p: Party = serde_json::from_str("\"CDU/CSU\"").unwrap();
        assert_eq!(p, Party::CduCsu);
        for p in Party::ALL {
            assert_eq!(p.name().parse::<Party>().unwrap(), p);
        }
    }
}
