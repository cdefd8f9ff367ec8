//! Canonical domain records.
//!
//! Field names are the wire names: the JSON encoding of these types is the one
//! used by the store log, snapshots, the HTTP API and golden files.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::id::{ParticleId, StrandId};
use crate::{Error, Millis, Result};

/// agent_state key set on an aggregate whose constituents were deleted.
pub const STALE_PROVENANCE_KEY: &str = "stale_provenance";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalMetadata {
    pub t_create: Millis,
    pub t_modify: Millis,
    pub t_access: Millis,
    pub t_event_start: Option<Millis>,
    pub t_event_end: Option<Millis>,
}

impl TemporalMetadata {
    pub fn created_at(now: Millis) -> Self {
        Self { t_create: now, t_modify: now, t_access: now, t_event_start: None, t_event_end: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessMetrics {
    pub f_access: u64,
    pub importance: f64,
    pub last_recalibrated: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SituationalImprint {
    pub source: String,
    pub agent_state: BTreeMap<String, String>,
    pub task_tag: Option<String>,
    pub user_tag: Option<String>,
}

impl SituationalImprint {
    pub fn from_source(source: impl Into<String>) -> Self {
        Self { source: source.into(), ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signifier {
    Assertion,
    Hypothesis,
    Query,
    Observation,
    Directive,
    EmotionalState,
}

impl Signifier {
    pub const ALL: [Signifier; 6] = [
        Signifier::Assertion,
        Signifier::Hypothesis,
        Signifier::Query,
        Signifier::Observation,
        Signifier::Directive,
        Signifier::EmotionalState,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Signifier::Assertion => "assertion",
            Signifier::Hypothesis => "hypothesis",
            Signifier::Query => "query",
            Signifier::Observation => "observation",
            Signifier::Directive => "directive",
            Signifier::EmotionalState => "emotional_state",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sig| sig.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParticleKind {
    IP,
    IA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightParticle {
    pub id: ParticleId,
    pub core_data: String,
    pub resonance_keys: BTreeSet<String>,
    pub signifiers: BTreeSet<Signifier>,
    pub imprint: SituationalImprint,
    pub temporal: TemporalMetadata,
    pub metrics: AccessMetrics,
    pub kind: ParticleKind,
}

impl InsightParticle {
    pub fn is_ia(&self) -> bool {
        self.kind == ParticleKind::IA
    }

    pub fn is_stale(&self) -> bool {
        self.imprint.agent_state.get(STALE_PROVENANCE_KEY).map(String::as_str) == Some("true")
    }

    pub fn mark_stale(&mut self) {
        self.imprint.agent_state.insert(STALE_PROVENANCE_KEY.into(), "true".into());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StrandType {
    Supports,
    Contradicts,
    Elaborates,
    Causes,
    Precedes,
    DerivedFrom,
    RelatedTo,
}

impl StrandType {
    pub const ALL: [StrandType; 7] = [
        StrandType::Supports,
        StrandType::Contradicts,
        StrandType::Elaborates,
        StrandType::Causes,
        StrandType::Precedes,
        StrandType::DerivedFrom,
        StrandType::RelatedTo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrandType::Supports => "supports",
            StrandType::Contradicts => "contradicts",
            StrandType::Elaborates => "elaborates",
            StrandType::Causes => "causes",
            StrandType::Precedes => "precedes",
            StrandType::DerivedFrom => "derivedFrom",
            StrandType::RelatedTo => "relatedTo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StrandEvidence {
    pub sim: f64,
    pub cooccur: u64,
    pub conf_soi: f64,
    pub common_neighbors: u64,
}

impl StrandEvidence {
    pub fn check(&self) -> Result<()> {
        if !(self.sim.is_finite() && (-1.0..=1.0).contains(&self.sim)) {
            return Err(Error::EvidenceOutOfRange("sim"));
        }
        if !(self.conf_soi.is_finite() && (0.0..=1.0).contains(&self.conf_soi)) {
            return Err(Error::EvidenceOutOfRange("conf_soi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalStrand {
    pub id: StrandId,
    pub src: ParticleId,
    pub dst: ParticleId,
    #[serde(rename = "type")]
    pub strand_type: StrandType,
    pub strength: f64,
    pub evidence: StrandEvidence,
    pub t_create: Millis,
}

/// One violated invariant reported by [`validate_particle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub detail: String,
}

impl Violation {
    fn new(rule: &str, detail: String) -> Self {
        Self { rule: rule.into(), detail }
    }
}

pub const RULE_TEMPORAL_ORDER: &str = "temporal order";
pub const RULE_EVENT_INTERVAL: &str = "event interval";
pub const RULE_IMPORTANCE_RANGE: &str = "importance range";
pub const RULE_CORE_DATA: &str = "core data";
pub const RULE_SOURCE: &str = "imprint source";
pub const RULE_RESONANCE_KEYS: &str = "resonance keys";
pub const RULE_TIMESTAMP_RANGE: &str = "timestamp range";

/// Lists every violated particle invariant; an empty list means the particle is valid.
pub fn validate_particle(p: &InsightParticle) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = &p.temporal;
    if t.t_create < 0 || p.metrics.last_recalibrated < 0 {
        out.push(Violation::new(RULE_TIMESTAMP_RANGE, format!("negative timestamp in {}", p.id)));
    }
    if t.t_modify < t.t_create {
        out.push(Violation::new(
            RULE_TEMPORAL_ORDER,
            format!("t_modify {} < t_create {}", t.t_modify, t.t_create),
        ));
    }
    if t.t_access < t.t_create {
        out.push(Violation::new(
            RULE_TEMPORAL_ORDER,
            format!("t_access {} < t_create {}", t.t_access, t.t_create),
        ));
    }
    if let (Some(start), Some(end)) = (t.t_event_start, t.t_event_end) {
        if start > end {
            out.push(Violation::new(
                RULE_EVENT_INTERVAL,
                format!("t_event_start {start} > t_event_end {end}"),
            ));
        }
    }
    let imp = p.metrics.importance;
    if !(imp.is_finite() && (0.0..=1.0).contains(&imp)) {
        out.push(Violation::new(RULE_IMPORTANCE_RANGE, format!("importance {imp} outside [0,1]")));
    }
    if p.core_data.is_empty() {
        out.push(Violation::new(RULE_CORE_DATA, "core_data is empty".into()));
    }
    if p.imprint.source.is_empty() {
        out.push(Violation::new(RULE_SOURCE, "imprint.source is empty".into()));
    }
    if p.resonance_keys.is_empty() {
        out.push(Violation::new(RULE_RESONANCE_KEYS, "no resonance keys".into()));
    }
    for key in &p.resonance_keys {
        if key.is_empty() || key.chars().any(char::is_uppercase) {
            out.push(Violation::new(RULE_RESONANCE_KEYS, format!("key {key:?} is not lowercase")));
        }
    }
    out
}

/// Records one access at `now`.
pub fn touch_access(p: &InsightParticle, now: Millis) -> Result<InsightParticle> {
    if now < p.temporal.t_access {
        return Err(Error::ClockRegression { now, last: p.temporal.t_access });
    }
    let mut out = p.clone();
    out.metrics.f_access += 1;
    out.temporal.t_access = now;
    Ok(out)
}
