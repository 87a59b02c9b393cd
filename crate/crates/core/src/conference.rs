//! Conference data model: participants, timed sessions with parallel groups,
//! pairwise prior knowledge and the proposal teams formed at the end.
//!
//! Conferences are read from a versioned JSON document (see
//! `docs/conference-schema.md`). Loading always validates; [`validate`] can be
//! called on hand-built values and returns every violated invariant instead of
//! stopping at the first one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema version written by this crate and accepted by [`load_conference`].
pub const SCHEMA_VERSION: u32 = 1;

/// Largest prior-knowledge score (sum of two four-level survey answers).
pub const MAX_K0: u8 = 6;

/// Pairs with `K0` at or above this value are excluded from analysis
/// (previous collaborators may not submit together).
pub const K0_EXCLUSION: u8 = 5;

#[derive(Debug, Error)]
pub enum ConferenceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed conference document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("conference failed validation:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown pair {0}")]
    UnknownPair(PairId),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Fellow,
    Facilitator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub role: Role,
    /// Categorical attributes used for group diversity (discipline,
    /// methodology, gender, ...).
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    /// Topic id → interest rating on the 1–5 survey scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_interests: Option<BTreeMap<String, u8>>,
}

impl Participant {
    pub fn fellow(id: impl Into<String>) -> Self {
        Self { id: id.into(), role: Role::Fellow, attributes: BTreeMap::new(), topic_interests: None }
    }

    pub fn facilitator(id: impl Into<String>) -> Self {
        Self { role: Role::Facilitator, ..Self::fellow(id) }
    }

    pub fn is_fellow(&self) -> bool {
        self.role == Role::Fellow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionKind {
    Discussion,
    SmallGroup,
    Other,
}

impl fmt::Display for SessionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionKind::Discussion => "discussion",
            SessionKind::SmallGroup => "small_group",
            SessionKind::Other => "other",
        })
    }
}

/// A timed session. Each entry of `groups` is one of the parallel groups
/// meeting during `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub kind: SessionKind,
    /// Minutes from the conference origin.
    pub start: i64,
    pub end: i64,
    pub groups: Vec<Vec<String>>,
    /// Optional discussion topic per group (same length as `groups`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_topics: Option<Vec<String>>,
}

impl Session {
    pub fn duration(&self) -> i64 {
        self.end - self.start
    }

    /// Index of the group containing `id`, if any.
    pub fn group_of(&self, id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|m| m == id))
    }
}

/// Unordered pair of participant ids, stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairId {
    pub first: String,
    pub second: String,
}

impl PairId {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Self { first: a, second: b }
        } else {
            Self { first: b, second: a }
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.first == id || self.second == id
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.first, self.second)
    }
}

/// Symmetric prior-knowledge scores over unordered pairs. Missing pairs read
/// as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorKnowledgeMatrix {
    entries: BTreeMap<PairId, u8>,
}

impl PriorKnowledgeMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, a: &str, b: &str, k0: u8) {
        let pair = PairId::new(a, b);
        if k0 == 0 {
            self.entries.remove(&pair);
        } else {
            self.entries.insert(pair, k0);
        }
    }

    pub fn get(&self, a: &str, b: &str) -> u8 {
        self.get_pair(&PairId::new(a, b))
    }

    pub fn get_pair(&self, pair: &PairId) -> u8 {
        self.entries.get(pair).copied().unwrap_or(0)
    }

    /// Nonzero entries in pair order.
    pub fn iter(&self) -> impl Iterator<Item = (&PairId, u8)> {
        self.entries.iter().map(|(p, k)| (p, *k))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalTeam {
    pub members: Vec<String>,
    #[serde(default)]
    pub funded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conference {
    pub name: Option<String>,
    pub participants: Vec<Participant>,
    /// Sessions ordered by start time.
    pub sessions: Vec<Session>,
    pub prior_knowledge: PriorKnowledgeMatrix,
    pub proposal_teams: Vec<ProposalTeam>,
    pub t_start: i64,
    pub t_collab: i64,
}

/// A fellow pair eligible for analysis together with its outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairOutcome {
    pub pair: PairId,
    pub collaborated: bool,
    pub k0: u8,
}

/// One violated invariant, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl Violation {
    fn new(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Self { entity: entity.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

impl Conference {
    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.id == id)
    }

    /// Fellow ids in sorted order.
    pub fn fellow_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.participants.iter().filter(|p| p.is_fellow()).map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        ids
    }

    /// Total participant count `N_tot` (fellows and facilitators).
    pub fn n_total(&self) -> usize {
        self.participants.len()
    }

    pub fn k0(&self, pair: &PairId) -> u8 {
        self.prior_knowledge.get_pair(pair)
    }

    /// Every fellow pair that shares at least one proposal team.
    pub fn collaborating_pairs(&self) -> BTreeSet<PairId> {
        let mut out = BTreeSet::new();
        for team in &self.proposal_teams {
            for (i, a) in team.members.iter().enumerate() {
                for b in &team.members[i + 1..] {
                    out.insert(PairId::new(a.as_str(), b.as_str()));
                }
            }
        }
        out
    }

    /// Sum of session durations in minutes.
    pub fn total_session_minutes(&self) -> i64 {
        self.sessions.iter().map(Session::duration).sum()
    }

    fn from_document(doc: ConferenceDocument) -> Result<Self, ConferenceError> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(ConferenceError::SchemaVersion { found: doc.schema_version });
        }
        let mut violations = Vec::new();
        let mut prior = PriorKnowledgeMatrix::new();
        let mut seen: HashMap<PairId, u8> = HashMap::new();
        for (a, b, k0) in doc.prior_knowledge {
            let entity = format!("prior_knowledge[{a},{b}]");
            if a == b {
                violations.push(Violation::new(entity, "self-pair"));
                continue;
            }
            if k0 > MAX_K0 {
                violations.push(Violation::new(entity, format!("K0={k0} outside 0..=6")));
                continue;
            }
            let pair = PairId::new(a.as_str(), b.as_str());
            if let Some(prev) = seen.insert(pair.clone(), k0) {
                if prev != k0 {
                    violations.push(Violation::new(
                        entity,
                        format!("conflicting entries {prev} and {k0} (matrix must be symmetric)"),
                    ));
                }
            }
            prior.set(&a, &b, k0);
        }
        let conference = Conference {
            name: doc.name,
            participants: doc.participants,
            sessions: doc.sessions,
            prior_knowledge: prior,
            proposal_teams: doc.proposal_teams,
            t_start: doc.t_start,
            t_collab: doc.t_collab,
        };
        violations.extend(validate(&conference));
        if violations.is_empty() {
            Ok(conference)
        } else {
            Err(ConferenceError::Invalid(violations))
        }
    }

    pub fn to_document(&self) -> ConferenceDocument {
        ConferenceDocument {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            participants: self.participants.clone(),
            sessions: self.sessions.clone(),
            prior_knowledge: self.prior_knowledge.iter().map(|(p, k)| (p.first.clone(), p.second.clone(), k)).collect(),
            proposal_teams: self.proposal_teams.clone(),
            t_start: self.t_start,
            t_collab: self.t_collab,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("conference serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ConferenceError> {
        let doc: ConferenceDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConferenceError> {
        std::fs::write(path, self.to_json())
            .map_err(|source| ConferenceError::Io { path: path.display().to_string(), source })
    }
}

/// On-disk representation of a conference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConferenceDocument {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub participants: Vec<Participant>,
    pub sessions: Vec<Session>,
    /// `[id_a, id_b, k0]` triples; omitted pairs have K0 = 0.
    #[serde(default)]
    pub prior_knowledge: Vec<(String, String, u8)>,
    #[serde(default)]
    pub proposal_teams: Vec<ProposalTeam>,
    pub t_start: i64,
    pub t_collab: i64,
}

/// Read and validate a conference file.
pub fn load_conference(path: &Path) -> Result<Conference, ConferenceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConferenceError::Io { path: path.display().to_string(), source })?;
    Conference::from_json(&text)
}

/// All invariant violations of `c`; empty iff the conference is valid.
pub fn validate(c: &Conference) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut roles: HashMap<&str, Role> = HashMap::new();
    for p in &c.participants {
        if roles.insert(p.id.as_str(), p.role).is_some() {
            out.push(Violation::new(format!("participant {}", p.id), "duplicate id"));
        }
        if let Some(interests) = &p.topic_interests {
            for (topic, &r) in interests {
                if !(1..=5).contains(&r) {
                    out.push(Violation::new(
                        format!("participant {}", p.id),
                        format!("interest {r} for topic {topic} outside 1..=5"),
                    ));
                }
            }
        }
    }

    let mut prev_start = i64::MIN;
    let mut prev_end: Option<(&str, i64)> = None;
    for s in &c.sessions {
        let entity = format!("session {}", s.id);
        if s.end <= s.start {
            out.push(Violation::new(&entity, format!("end {} not after start {}", s.end, s.start)));
        }
        if s.start < prev_start {
            out.push(Violation::new(&entity, "sessions not ordered by start time"));
        }
        if let Some((prev_id, end)) = prev_end {
            if s.start < end {
                out.push(Violation::new(
                    &entity,
                    format!("overlaps session {prev_id} (starts at {}, previous ends at {end})", s.start),
                ));
            }
        }
        prev_start = s.start;
        prev_end = Some((s.id.as_str(), s.end));

        let mut members_seen: HashMap<&str, usize> = HashMap::new();
        for (gi, group) in s.groups.iter().enumerate() {
            for m in group {
                if !roles.contains_key(m.as_str()) {
                    out.push(Violation::new(&entity, format!("group {gi} member {m} is not a declared participant")));
                }
                if let Some(other) = members_seen.insert(m.as_str(), gi) {
                    if other == gi {
                        out.push(Violation::new(&entity, format!("{m} listed twice in group {gi}")));
                    } else {
                        out.push(Violation::new(&entity, format!("groups {other} and {gi} share member {m}")));
                    }
                }
            }
        }
        if let Some(topics) = &s.group_topics {
            if topics.len() != s.groups.len() {
                out.push(Violation::new(
                    &entity,
                    format!("{} group topics for {} groups", topics.len(), s.groups.len()),
                ));
            }
        }
    }

    if let Some(first) = c.sessions.first() {
        if c.t_start > first.start {
            out.push(Violation::new("t_start", format!("{} is after first session start {}", c.t_start, first.start)));
        }
    }
    let last_end = c.sessions.iter().map(|s| s.end).max();
    if let Some(end) = last_end {
        if c.t_collab < end {
            out.push(Violation::new("t_collab", format!("{} is before last session end {end}", c.t_collab)));
        }
    }
    if c.t_collab < c.t_start {
        out.push(Violation::new("t_collab", "before t_start"));
    }

    for (pair, k0) in c.prior_knowledge.iter() {
        if k0 > MAX_K0 {
            out.push(Violation::new(format!("prior_knowledge {pair}"), format!("K0={k0} outside 0..=6")));
        }
        if pair.first == pair.second {
            out.push(Violation::new(format!("prior_knowledge {pair}"), "self-pair"));
        }
    }

    for (ti, team) in c.proposal_teams.iter().enumerate() {
        let entity = format!("proposal_team {ti}");
        if !(2..=4).contains(&team.members.len()) {
            out.push(Violation::new(&entity, format!("{} members (expected 2-4)", team.members.len())));
        }
        let mut uniq = BTreeSet::new();
        for m in &team.members {
            if !uniq.insert(m.as_str()) {
                out.push(Violation::new(&entity, format!("{m} listed twice")));
            }
            match roles.get(m.as_str()) {
                None => out.push(Violation::new(&entity, format!("member {m} is not a declared participant"))),
                Some(Role::Facilitator) => {
                    out.push(Violation::new(&entity, format!("member {m} is a facilitator, not a fellow")))
                }
                Some(Role::Fellow) => {}
            }
        }
    }
    out
}

/// Fellow pairs with `K0 <= 4`, sorted by pair id, each labelled with its
/// collaboration outcome. Facilitators never form pairs.
pub fn eligible_pairs(c: &Conference) -> Vec<PairOutcome> {
    let collaborating = c.collaborating_pairs();
    let fellows = c.fellow_ids();
    let mut out = Vec::with_capacity(fellows.len() * fellows.len().saturating_sub(1) / 2);
    for (i, a) in fellows.iter().enumerate() {
        for b in &fellows[i + 1..] {
            let pair = PairId::new(*a, *b);
            let k0 = c.k0(&pair);
            if k0 >= K0_EXCLUSION {
                continue;
            }
            let collaborated = collaborating.contains(&pair);
            out.push(PairOutcome { pair, collaborated, k0 });
        }
    }
    out.sort_by(|x, y| x.pair.cmp(&y.pair));
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Fellows `ids`, one session putting everyone in a single group.
    pub fn tiny(ids: &[&str]) -> Conference {
        Conference {
            name: None,
            participants: ids.iter().map(|id| Participant::fellow(*id)).collect(),
            sessions: vec![Session {
                id: "s1".into(),
                kind: SessionKind::Discussion,
                start: 60,
                end: 135,
                groups: vec![ids.iter().map(|s| s.to_string()).collect()],
                group_topics: None,
            }],
            prior_knowledge: PriorKnowledgeMatrix::new(),
            proposal_teams: vec![],
            t_start: 0,
            t_collab: 200,
        }
    }
}
