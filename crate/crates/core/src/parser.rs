//! Splits a plenary protocol into attributed speeches.
//!
//! Speaker headers are recognized by a versioned set of regular expressions
//! (`resources/header_patterns.json`): member headers `Name (Party):`,
//! government headers `Name, Position:` and presidium headers
//! `Präsidentin Name:`. A speech runs until the next header or the session end
//! marker. Presidium turns are dropped, and parenthesized interjection blocks
//! such as `(Beifall bei der SPD)` are removed from speech text.

use std::collections::HashMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::party::{Party, PartyMap};
use crate::preprocess::tokenize;
use crate::protocol::{parse_session_label, RawProtocol};
use crate::speech::Speech;
use crate::{Error, Result};

/// Speeches with fewer tokens are flagged `short`.
pub const MIN_SPEECH_TOKENS: usize = 20;

#[derive(Debug, Deserialize)]
struct PatternFile {
    version: u32,
    session_start: String,
    session_end: String,
    member: String,
    government: String,
    chair: String,
    candidate: String,
    member_position: String,
}

/// Compiled header grammar.
#[derive(Debug, Clone)]
pub struct HeaderPatterns {
    pub version: u32,
    session_start: Regex,
    session_end: Regex,
    member: Regex,
    government: Regex,
    chair: Regex,
    candidate: Regex,
    member_position: String,
}

impl HeaderPatterns {
    pub fn from_json(json: &str) -> Result<Self> {
        let f: PatternFile = serde_json::from_str(json).map_err(|e| Error::json("header patterns", e))?;
        let compile = |name: &str, re: &str| {
            Regex::new(re).map_err(|e| Error::Config(format!("header pattern {name}: {e}")))
        };
        let patterns = Self {
            version: f.version,
            session_start: compile("session_start", &f.session_start)?,
            session_end: compile("session_end", &f.session_end)?,
            member: compile("member", &f.member)?,
            government: compile("government", &f.government)?,
            chair: compile("chair", &f.chair)?,
            candidate: compile("candidate", &f.candidate)?,
            member_position: f.member_position,
        };
        for (name, re, groups) in [
            ("member", &patterns.member, &["name", "party"][..]),
            ("government", &patterns.government, &["name", "position"][..]),
            ("chair", &patterns.chair, &["name", "position"][..]),
        ] {
            for g in groups {
                if !re.capture_names().flatten().any(|n| n == *g) {
                    return Err(Error::Config(format!("header pattern {name} lacks group {g:?}")));
                }
            }
        }
        Ok(patterns)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../../resources/header_patterns.json"))
            .expect("bundled header patterns are valid")
    }

    /// True if `line` would be taken as a speech (member or government) header.
    pub fn is_speech_header(&self, line: &str) -> bool {
        self.member.is_match(line) || self.government.is_match(line)
    }
}

/// Speaker name → party surface form for speakers whose headers carry a
/// government role instead of a party.
#[derive(Debug, Clone, Default)]
pub struct SpeakerRoster {
    parties: HashMap<String, String>,
}

impl SpeakerRoster {
    pub fn from_json(json: &str) -> Result<Self> {
        let parties = serde_json::from_str(json).map_err(|e| Error::json("speaker roster", e))?;
        Ok(Self { parties })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../../resources/government_roster.json"))
            .expect("bundled roster is valid")
    }

    pub fn party_form(&self, speaker: &str) -> Option<&str> {
        self.parties.get(speaker).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Session chair turn; procedural, not a debate speech.
    Presidium,
    /// Header immediately followed by another header or the session end.
    EmptyBody,
    /// Looks like a header but matches none of the header patterns.
    UnrecognizedFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedHeader {
    /// 1-based line number in the protocol body.
    pub line: usize,
    pub text: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub dip_id: String,
    pub session_label: String,
    pub pattern_version: u32,
    pub header_candidates: usize,
    pub speeches_extracted: usize,
    pub headers_rejected: Vec<RejectedHeader>,
    pub unknown_party_names: Vec<String>,
}

#[derive(Debug)]
enum HeaderKind {
    Speech { speaker: String, party: Party, position: String },
    Chair,
}

#[derive(Debug)]
struct Turn {
    line: usize,
    header: String,
    kind: HeaderKind,
    lines: Vec<String>,
}

/// Net parenthesis depth change of one line.
fn paren_delta(line: &str) -> i32 {
    line.chars().fold(0, |d, c| match c {
        '(' => d + 1,
        ')' => d - 1,
        _ => d,
    })
}

/// Everything needed to parse protocols: header grammar, party map and the
/// government-speaker roster.
#[derive(Debug, Clone)]
pub struct SpeechParser {
    pub patterns: HeaderPatterns,
    pub party_map: PartyMap,
    pub roster: SpeakerRoster,
}

impl SpeechParser {
    pub fn new(patterns: HeaderPatterns, party_map: PartyMap, roster: SpeakerRoster) -> Self {
        Self {
            patterns,
            party_map,
            roster,
        }
    }

    pub fn bundled() -> Self {
        Self::new(HeaderPatterns::bundled(), PartyMap::bundled(), SpeakerRoster::bundled())
    }

    /// Loads `header_patterns.json`, `party_map.json` and
    /// `government_roster.json` from a resources directory.
    pub fn from_resources(dir: &Path) -> Result<Self> {
        Ok(Self::new(
            HeaderPatterns::load(&dir.join("header_patterns.json"))?,
            PartyMap::load(&dir.join("party_map.json"))?,
            SpeakerRoster::load(&dir.join("government_roster.json"))?,
        ))
    }

    fn classify(&self, line: &str, unknown: &mut Vec<String>) -> Option<HeaderKind> {
        let p = &self.patterns;
        if p.chair.is_match(line) {
            return Some(HeaderKind::Chair);
        }
        if let Some(c) = p.member.captures(line) {
            let raw_party = c["party"].trim();
            let party = self.party_map.canonicalize(raw_party);
            if party == Party::Unknown {
                unknown.push(raw_party.to_string());
            }
            return Some(HeaderKind::Speech {
                speaker: c["name"].trim().to_string(),
                party,
                position: p.member_position.clone(),
            });
        }
        if let Some(c) = p.government.captures(line) {
            let speaker = c["name"].trim().to_string();
            let party = match self.roster.party_form(&speaker) {
                Some(form) => self.party_map.canonicalize(form),
                None => Party::Unknown,
            };
            if party == Party::Unknown {
                unknown.push(speaker.clone());
            }
            return Some(HeaderKind::Speech {
                speaker,
                party,
                position: c["position"].trim().to_string(),
            });
        }
        None
    }

    /// Extracts the speeches of one protocol in document order. `u_id`s are
    /// left at 0; [`assign_uids`] numbers them corpus-wide.
    pub fn extract(&self, raw: &RawProtocol) -> Result<(Vec<Speech>, ParseReport)> {
        let reference = &raw.reference;
        parse_session_label(&reference.session_label)?;
        if raw.body.trim().is_empty() {
            return Err(Error::Validation(format!("protocol {} has an empty body", reference.dip_id)));
        }
        let lines: Vec<&str> = raw.body.lines().collect();
        let p = &self.patterns;
        let start = lines
            .iter()
            .position(|l| p.session_start.is_match(l.trim()))
            .map_or(0, |i| i + 1);
        let end = lines[start..]
            .iter()
            .position(|l| p.session_end.is_match(l.trim()))
            .map_or(lines.len(), |i| start + i);

        let mut report = ParseReport {
            dip_id: reference.dip_id.clone(),
            session_label: reference.session_label.clone(),
            pattern_version: p.version,
            header_candidates: 0,
            speeches_extracted: 0,
            headers_rejected: Vec::new(),
            unknown_party_names: Vec::new(),
        };
        let mut turns: Vec<Turn> = Vec::new();
        let mut depth = 0i32;
        for (offset, raw_line) in lines[start..end].iter().enumerate() {
            let line_no = start + offset + 1;
            let line = raw_line.trim();
            if depth > 0 {
                depth = (depth + paren_delta(line)).max(0);
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if line.starts_with('(') {
                depth = paren_delta(line).max(0);
                continue;
            }
            if let Some(kind) = self.classify(line, &mut report.unknown_party_names) {
                report.header_candidates += 1;
                turns.push(Turn {
                    line: line_no,
                    header: line.to_string(),
                    kind,
                    lines: Vec::new(),
                });
                continue;
            }
            if p.candidate.is_match(line) {
                report.header_candidates += 1;
                report.headers_rejected.push(RejectedHeader {
                    line: line_no,
                    text: line.to_string(),
                    reason: RejectReason::UnrecognizedFormat,
                });
            }
            if let Some(turn) = turns.last_mut() {
                turn.lines.push(line.to_string());
            }
        }

        let mut speeches = Vec::new();
        for turn in turns {
            match turn.kind {
                HeaderKind::Chair => report.headers_rejected.push(RejectedHeader {
                    line: turn.line,
                    text: turn.header,
                    reason: RejectReason::Presidium,
                }),
                HeaderKind::Speech { .. } if turn.lines.is_empty() => {
                    report.headers_rejected.push(RejectedHeader {
                        line: turn.line,
                        text: turn.header,
                        reason: RejectReason::EmptyBody,
                    })
                }
                HeaderKind::Speech {
                    speaker,
                    party,
                    position,
                } => {
                    let text = turn.lines.join("\n");
                    let short = tokenize(&text).len() < MIN_SPEECH_TOKENS;
                    speeches.push(Speech {
                        u_id: 0,
                        session_id: reference.session_label.clone(),
                        date: reference.date,
                        speaker,
                        party,
                        position,
                        text,
                        short,
                    });
                }
            }
        }
        report.headers_rejected.sort_by_key(|r| r.line);
        report.unknown_party_names.sort();
        report.unknown_party_names.dedup();
        report.speeches_extracted = speeches.len();
        let speech_headers = report.speeches_extracted
            + report
                .headers_rejected
                .iter()
                .filter(|r| r.reason == RejectReason::EmptyBody)
                .count();
        if speech_headers == 0 {
            return Err(Error::StructuralParse {
                dip_id: reference.dip_id.clone(),
                session_label: reference.session_label.clone(),
            });
        }
        Ok((speeches, report))
    }
}

/// Free-function form of [`SpeechParser::extract`] with the bundled header
/// grammar and roster.
pub fn extract_speeches(raw: &RawProtocol, party_map: &PartyMap) -> Result<(Vec<Speech>, ParseReport)> {
    SpeechParser::new(HeaderPatterns::bundled(), party_map.clone(), SpeakerRoster::bundled()).extract(raw)
}

/// Orders per-protocol speech lists by (date, legislature, session) and
/// numbers all speeches from 1, keeping in-protocol order.
pub fn assign_uids(mut protocols: Vec<Vec<Speech>>) -> Result<Vec<Speech>> {
    let mut keyed = Vec::with_capacity(protocols.len());
    for (i, speeches) in protocols.drain(..).enumerate() {
        let key = match speeches.first() {
            Some(s) => (s.date, parse_session_label(&s.session_id)?),
            None => continue,
        };
        keyed.push((key, i, speeches));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut next = 1u64;
    let mut out = Vec::new();
    for (_, _, speeches) in keyed {
        for mut s in speeches {
            s.u_id = next;
            next += 1;
            out.push(s);
        }
    }
    Ok(out)
}
