//! The composite store: particles plus their vector, temporal and relational
//! layers, kept in step by every mutation.
//!
//! Every mutation appends a [`Change`] to an in-memory journal. The std crate
//! drains it into the on-disk log; replaying changes through [`Weave::apply`]
//! reproduces the same state.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::embed::{DeterministicEmbedder, Embedder};
use crate::graph::{NodeLookup, StrandGraph};
use crate::id::{new_particle_id, ParticleId, StrandId};
use crate::model::{
    validate_particle, AccessMetrics, InsightParticle, ParticleKind, RelationalStrand, Signifier, SituationalImprint,
    StrandEvidence, StrandType, TemporalMetadata,
};
use crate::oracle::SemanticOracle;
use crate::query::{execute, QuerySpec, RecallResult};
use crate::refine::{refinement_cycle, RefinementReport};
use crate::temporal::{TemporalField, TemporalIndex};
use crate::text::SplitMix64;
use crate::vector::VectorIndex;
use crate::{Error, Millis, Result};

/// One journaled mutation. The serialized `op` names are the log's op codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "payload", rename_all = "snake_case")]
pub enum Change {
    Put(InsightParticle),
    Delete(ParticleId),
    TombstoneIaStale(ParticleId),
    PutStrand(RelationalStrand),
    AcknowledgeContradiction(StrandId),
    Refined(Millis),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cascade {
    StrandsOnly,
    StrandsAndFlagIas,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionReport {
    pub deleted: ParticleId,
    pub strands_removed: usize,
    pub ias_marked_stale: Vec<ParticleId>,
}

/// Predicate for [`Weave::scan`]; absent fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanFilter {
    #[serde(default)]
    pub kind: Option<ParticleKind>,
    #[serde(default)]
    pub signifier: Option<Signifier>,
    #[serde(default)]
    pub user_tag: Option<String>,
}

impl ScanFilter {
    pub fn kind(kind: ParticleKind) -> Self {
        Self { kind: Some(kind), ..Self::default() }
    }

    pub fn matches(&self, p: &InsightParticle) -> bool {
        self.kind.is_none_or(|k| p.kind == k)
            && self.signifier.is_none_or(|s| p.signifiers.contains(&s))
            && self.user_tag.as_ref().is_none_or(|t| p.imprint.user_tag.as_ref() == Some(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSizes {
    pub store: usize,
    pub vector: usize,
    /// Entries per temporal field, in field order.
    pub temporal: BTreeMap<String, usize>,
    pub graph: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub particle_count: usize,
    pub ia_count: usize,
    pub strand_count: usize,
    pub index_sizes: IndexSizes,
    pub last_refinement: Millis,
    pub ingests_since_refinement: u64,
    /// Fraction of IPs outside every aggregate's provenance.
    pub fragmentation: f64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityViolation {
    pub check: String,
    pub detail: String,
}

impl IntegrityViolation {
    fn new(check: &str, detail: String) -> Self {
        Self { check: check.into(), detail }
    }
}

pub const CHECK_REFERENTIAL: &str = "referential";
pub const CHECK_MEMBERSHIP: &str = "membership";
pub const CHECK_PROVENANCE: &str = "provenance";
pub const CHECK_PARTICLE: &str = "particle";
pub const CHECK_STRAND: &str = "strand";

/// Full logical state, as written to snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeaveState {
    pub seq: u64,
    pub last_refinement: Millis,
    pub ingests_since_refinement: u64,
    pub minted: u64,
    pub acknowledged: Vec<StrandId>,
    pub particles: Vec<InsightParticle>,
    pub strands: Vec<RelationalStrand>,
}

#[derive(Clone)]
pub struct Weave {
    config: EngineConfig,
    embedder: Arc<dyn Embedder>,
    particles: BTreeMap<ParticleId, InsightParticle>,
    vectors: VectorIndex,
    temporal: TemporalIndex,
    graph: StrandGraph,
    seq: u64,
    journal: Vec<(u64, Change)>,
    journaling: bool,
    last_refinement: Millis,
    ingests_since_refinement: u64,
    minted: u64,
}

impl core::fmt::Debug for Weave {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Weave")
            .field("particles", &self.particles.len())
            .field("strands", &self.graph.len())
            .field("seq", &self.seq)
            .finish()
    }
}

impl Weave {
    /// A weave using the deterministic embedder at the configured dimension.
    pub fn new(config: EngineConfig) -> Result<Self> {
        let embedder = Arc::new(DeterministicEmbedder::new(config.dimension));
        Self::with_embedder(config, embedder)
    }

    pub fn with_embedder(config: EngineConfig, embedder: Arc<dyn Embedder>) -> Result<Self> {
        config.check()?;
        let vectors = VectorIndex::new(embedder.dimension(), embedder.tag(), config.ann);
        Ok(Self {
            graph: StrandGraph::new(config.strand_weights),
            config,
            embedder,
            particles: BTreeMap::new(),
            vectors,
            temporal: TemporalIndex::new(),
            seq: 0,
            journal: Vec::new(),
            journaling: true,
            last_refinement: 0,
            ingests_since_refinement: 0,
            minted: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn Embedder {
        &*self.embedder
    }

    pub fn particles(&self) -> &BTreeMap<ParticleId, InsightParticle> {
        &self.particles
    }

    pub fn vectors(&self) -> &VectorIndex {
        &self.vectors
    }

    pub fn temporal(&self) -> &TemporalIndex {
        &self.temporal
    }

    pub fn graph(&self) -> &StrandGraph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn last_refinement(&self) -> Millis {
        self.last_refinement
    }

    pub fn ingests_since_refinement(&self) -> u64 {
        self.ingests_since_refinement
    }

    /// Turns journaling off for throwaway weaves (benchmarks); the journal is
    /// what makes a weave durable, so engines leave it on.
    pub fn set_journaling(&mut self, on: bool) {
        self.journaling = on;
        if !on {
            self.journal.clear();
        }
    }

    pub fn take_journal(&mut self) -> Vec<(u64, Change)> {
        core::mem::take(&mut self.journal)
    }

    pub fn journal(&self) -> &[(u64, Change)] {
        &self.journal
    }

    fn record(&mut self, change: Change) {
        self.seq += 1;
        if self.journaling {
            self.journal.push((self.seq, change));
        }
    }

    /// A fresh id for a particle created at `now`. Deterministic given the
    /// configured seed and the number of particles created so far.
    pub fn mint_id(&self, now: Millis) -> ParticleId {
        let mut rng = SplitMix64::new(self.config.seed ^ self.minted.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        loop {
            let id = new_particle_id(now.max(0) as u64, rng.next_u64());
            if !self.particles.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn get(&self, id: ParticleId) -> Result<&InsightParticle> {
        self.particles.get(&id).ok_or(Error::NotFound(id))
    }

    pub fn scan(&self, filter: &ScanFilter) -> Vec<&InsightParticle> {
        self.particles.values().filter(|p| filter.matches(p)).collect()
    }

    /// Stores `p`, replacing any earlier version with the same id. Re-putting
    /// identical content is a no-op.
    pub fn put(&mut self, p: InsightParticle) -> Result<ParticleId> {
        let violations = validate_particle(&p);
        if let Some(v) = violations.first() {
            return Err(Error::Validation(format!("{}: {}", v.rule, v.detail)));
        }
        if let Some(old) = self.particles.get(&p.id) {
            if *old == p {
                return Ok(p.id);
            }
            if old.kind != p.kind {
                return Err(Error::Validation(format!("{} cannot change kind", p.id)));
            }
        }
        let id = p.id;
        self.upsert(p.clone())?;
        self.record(Change::Put(p));
        Ok(id)
    }

    /// Writes `p` into every layer. Fails before mutating anything.
    fn upsert(&mut self, p: InsightParticle) -> Result<()> {
        let id = p.id;
        match self.particles.get(&id) {
            Some(old) => {
                let vector = if old.core_data != p.core_data { Some(self.embedder.embed(&p.core_data)?) } else { None };
                let old_t = old.temporal;
                if let Some(v) = vector {
                    self.vectors.remove(id)?;
                    self.vectors.insert(id, &v)?;
                }
                if old_t != p.temporal {
                    self.temporal.reindex(id, &old_t, p.temporal)?;
                }
            }
            None => {
                let v = self.embedder.embed(&p.core_data)?;
                self.vectors.insert(id, &v)?;
                if let Err(e) = self.temporal.insert(id, p.temporal) {
                    self.vectors.remove(id)?;
                    return Err(e);
                }
                self.minted += 1;
                if p.kind == ParticleKind::IP {
                    self.ingests_since_refinement += 1;
                }
            }
        }
        self.particles.insert(id, p);
        Ok(())
    }

    /// Runs `raw` through the oracle and stores the resulting particle.
    /// Nothing is written if the oracle or validation fails.
    pub fn ingest(
        &mut self,
        raw: &str,
        imprint: SituationalImprint,
        now: Millis,
        oracle: &dyn SemanticOracle,
    ) -> Result<ParticleId> {
        self.ingest_event(raw, imprint, None, None, now, oracle)
    }

    pub fn ingest_event(
        &mut self,
        raw: &str,
        imprint: SituationalImprint,
        t_event_start: Option<Millis>,
        t_event_end: Option<Millis>,
        now: Millis,
        oracle: &dyn SemanticOracle,
    ) -> Result<ParticleId> {
        if raw.trim().is_empty() {
            return Err(Error::EmptyInput);
        }
        if now < 0 {
            return Err(Error::Validation("now must be non-negative".into()));
        }
        let out = oracle.transform(raw, &imprint)?;
        out.check(self.config.oracle.max_core_data_chars)?;
        let mut imprint = imprint;
        for (k, v) in out.imprint_enrichment {
            imprint.agent_state.entry(k).or_insert(v);
        }
        let mut signifiers = out.signifiers;
        if signifiers.is_empty() {
            signifiers.insert(Signifier::Assertion);
        }
        let mut temporal = TemporalMetadata::created_at(now);
        temporal.t_event_start = t_event_start;
        temporal.t_event_end = t_event_end;
        let p = InsightParticle {
            id: self.mint_id(now),
            core_data: out.core_data,
            resonance_keys: out.resonance_keys.iter().map(|k| k.to_lowercase()).collect(),
            signifiers,
            imprint,
            temporal,
            metrics: AccessMetrics { f_access: 0, importance: self.config.initial_importance, last_recalibrated: now },
            kind: ParticleKind::IP,
        };
        self.put(p)
    }

    /// Removes `id` from every layer together with its strands. Aggregates
    /// that had `id` as a constituent are flagged stale when requested, and
    /// always when they drop below the minimum provenance size.
    pub fn delete(&mut self, id: ParticleId, cascade: Cascade) -> Result<DeletionReport> {
        if !self.particles.contains_key(&id) {
            return Err(Error::NotFound(id));
        }
        let dependents: Vec<ParticleId> = self
            .graph
            .aggregate_links(id)
            .map(|s| s.dst)
            .filter(|dst| self.particles.get(dst).is_some_and(InsightParticle::is_ia))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let strands_removed = self.remove_everywhere(id)?;
        self.record(Change::Delete(id));
        let min = self.config.cluster.min_cluster_size;
        let mut ias_marked_stale = Vec::new();
        for ia in dependents {
            let short = self.graph.provenance_unchecked(ia).len() < min;
            if cascade == Cascade::StrandsAndFlagIas || short {
                self.mark_stale(ia);
                ias_marked_stale.push(ia);
            }
        }
        Ok(DeletionReport { deleted: id, strands_removed, ias_marked_stale })
    }

    fn remove_everywhere(&mut self, id: ParticleId) -> Result<usize> {
        let p = self.particles.remove(&id).ok_or(Error::NotFound(id))?;
        if self.vectors.contains(id) {
            self.vectors.remove(id)?;
        }
        if self.temporal.contains(id) {
            self.temporal.remove(id)?;
        }
        let removed = self.graph.remove_node(id).len();
        drop(p);
        Ok(removed)
    }

    fn mark_stale(&mut self, ia: ParticleId) {
        if let Some(p) = self.particles.get_mut(&ia) {
            if !p.is_stale() {
                p.mark_stale();
                self.record(Change::TombstoneIaStale(ia));
            }
        }
    }

    pub fn add_strand(
        &mut self,
        src: ParticleId,
        dst: ParticleId,
        strand_type: StrandType,
        evidence: StrandEvidence,
        now: Millis,
    ) -> Result<RelationalStrand> {
        evidence.check()?;
        let s = self.graph.add_strand(src, dst, strand_type, evidence, now, &self.particles)?;
        self.record(Change::PutStrand(s.clone()));
        Ok(s)
    }

    /// Inserts a strand verbatim, without endpoint checks. Meant for importing
    /// graph exports; [`Weave::audit`] reports anything inconsistent.
    pub fn import_strand(&mut self, s: RelationalStrand) {
        self.graph.insert_raw(s.clone());
        self.record(Change::PutStrand(s));
    }

    pub fn acknowledge_contradiction(&mut self, strand: StrandId) -> Result<()> {
        self.graph.acknowledge(strand)?;
        self.record(Change::AcknowledgeContradiction(strand));
        Ok(())
    }

    /// Replaces the access metrics of `id` (used by recalibration).
    pub fn set_metrics(&mut self, id: ParticleId, metrics: AccessMetrics) {
        if let Some(p) = self.particles.get_mut(&id) {
            if p.metrics != metrics {
                p.metrics = metrics;
                let p = p.clone();
                self.record(Change::Put(p));
            }
        }
    }

    /// Records one access to each id. A `now` earlier than the stored access
    /// time counts as an access at the stored time. Unknown ids are skipped.
    pub fn touch(&mut self, ids: &[ParticleId], now: Millis) -> Vec<ParticleId> {
        let mut touched = Vec::with_capacity(ids.len());
        for &id in ids {
            let Some(p) = self.particles.get(&id) else { continue };
            let at = now.max(p.temporal.t_access);
            let Ok(next) = crate::model::touch_access(p, at) else { continue };
            let old_t = p.temporal;
            if self.temporal.reindex(id, &old_t, next.temporal).is_err() {
                continue;
            }
            self.particles.insert(id, next.clone());
            self.record(Change::Put(next));
            touched.push(id);
        }
        touched
    }

    /// Hybrid recall against the current state, without recording accesses.
    pub fn query(&self, spec: &QuerySpec, now: Millis) -> Result<RecallResult> {
        execute(self, spec, now)
    }

    /// [`Weave::query`] followed by an access touch of every hit.
    pub fn recall(&mut self, spec: &QuerySpec, now: Millis) -> Result<RecallResult> {
        let result = self.query(spec, now)?;
        let ids: Vec<ParticleId> = result.hits.iter().map(|h| h.id).collect();
        self.touch(&ids, now);
        Ok(result)
    }

    pub fn refine(&mut self, oracle: &dyn SemanticOracle, now: Millis) -> RefinementReport {
        refinement_cycle(self, oracle, now)
    }

    /// Starts a new refinement period at `now`.
    pub fn mark_refined(&mut self, now: Millis) {
        self.last_refinement = now;
        self.ingests_since_refinement = 0;
        self.record(Change::Refined(now));
    }

    pub fn fragmentation(&self) -> f64 {
        let covered: BTreeSet<ParticleId> = self
            .particles
            .values()
            .filter(|p| p.is_ia())
            .flat_map(|p| self.graph.provenance_unchecked(p.id))
            .collect();
        let ips = self.particles.values().filter(|p| p.kind == ParticleKind::IP);
        let (total, outside) = ips.fold((0usize, 0usize), |(t, o), p| (t + 1, o + usize::from(!covered.contains(&p.id))));
        if total == 0 {
            0.0
        } else {
            outside as f64 / total as f64
        }
    }

    pub fn stats(&self) -> EngineStats {
        let temporal = TemporalField::ALL
            .iter()
            .map(|f| (f.as_str().to_string(), self.temporal.field_len(*f)))
            .collect();
        EngineStats {
            particle_count: self.particles.len(),
            ia_count: self.particles.values().filter(|p| p.is_ia()).count(),
            strand_count: self.graph.len(),
            index_sizes: IndexSizes {
                store: self.particles.len(),
                vector: self.vectors.len(),
                temporal,
                graph: self.graph.len(),
            },
            last_refinement: self.last_refinement,
            ingests_since_refinement: self.ingests_since_refinement,
            fragmentation: self.fragmentation(),
            seq: self.seq,
        }
    }

    /// Cross-layer integrity check; an empty list means healthy.
    pub fn audit(&self) -> Vec<IntegrityViolation> {
        let mut out = Vec::new();
        for s in self.graph.strands() {
            for end in [s.src, s.dst] {
                if !self.particles.contains_key(&end) {
                    out.push(IntegrityViolation::new(
                        CHECK_REFERENTIAL,
                        format!("strand {} references missing particle {end}", s.id),
                    ));
                }
            }
            if s.strand_type == StrandType::DerivedFrom && self.particles.kind_of(s.dst) == Some(ParticleKind::IP) {
                out.push(IntegrityViolation::new(CHECK_STRAND, format!("derivedFrom strand {} ends at an IP", s.id)));
            }
            if s.src == s.dst {
                out.push(IntegrityViolation::new(CHECK_STRAND, format!("strand {} is a self-loop", s.id)));
            }
            if !(s.strength > 0.0 && s.strength < 1.0) {
                out.push(IntegrityViolation::new(CHECK_STRAND, format!("strand {} strength {}", s.id, s.strength)));
            }
        }
        self.audit_membership(&mut out);
        let min = self.config.cluster.min_cluster_size;
        for p in self.particles.values() {
            for v in validate_particle(p) {
                out.push(IntegrityViolation::new(CHECK_PARTICLE, format!("{}: {}: {}", p.id, v.rule, v.detail)));
            }
            if p.is_ia() && !p.is_stale() {
                let n = self.graph.provenance_unchecked(p.id).len();
                if n < min {
                    out.push(IntegrityViolation::new(
                        CHECK_PROVENANCE,
                        format!("aggregate {} has {n} constituents, needs {min}", p.id),
                    ));
                }
            }
        }
        out
    }

    fn audit_membership(&self, out: &mut Vec<IntegrityViolation>) {
        let store: BTreeSet<ParticleId> = self.particles.keys().copied().collect();
        let vector: BTreeSet<ParticleId> = self.vectors.ids().collect();
        for id in store.symmetric_difference(&vector) {
            let side = if store.contains(id) { "missing from" } else { "orphaned in" };
            out.push(IntegrityViolation::new(CHECK_MEMBERSHIP, format!("{id} {side} the vector index")));
        }
        let temporal: BTreeSet<ParticleId> = self.temporal.ids().collect();
        for id in store.symmetric_difference(&temporal) {
            let side = if store.contains(id) { "missing from" } else { "orphaned in" };
            out.push(IntegrityViolation::new(CHECK_MEMBERSHIP, format!("{id} {side} the temporal index")));
        }
        for p in self.particles.values() {
            if let Some(t) = self.temporal.get(p.id) {
                if *t != p.temporal {
                    out.push(IntegrityViolation::new(CHECK_MEMBERSHIP, format!("{} indexed with stale times", p.id)));
                }
            }
        }
        for field in TemporalField::ALL {
            let expected = self.particles.values().filter(|p| field.get(&p.temporal).is_some()).count();
            if self.temporal.field_len(field) != expected {
                out.push(IntegrityViolation::new(
                    CHECK_MEMBERSHIP,
                    format!("{} index holds {} entries, expected {expected}", field.as_str(), self.temporal.field_len(field)),
                ));
            }
        }
    }

    /// Applies a journaled change verbatim (log replay). Deletions here never
    /// cascade into stale flags; those arrive as their own records.
    pub fn apply(&mut self, seq: u64, change: Change) -> Result<()> {
        if seq <= self.seq {
            return Err(Error::Validation(format!("sequence {seq} does not follow {}", self.seq)));
        }
        match change {
            Change::Put(p) => self.upsert(p)?,
            Change::Delete(id) => {
                self.remove_everywhere(id)?;
            }
            Change::TombstoneIaStale(id) => {
                self.particles.get_mut(&id).ok_or(Error::NotFound(id))?.mark_stale();
            }
            Change::PutStrand(s) => self.graph.insert_raw(s),
            Change::AcknowledgeContradiction(id) => self.graph.acknowledge(id)?,
            Change::Refined(now) => {
                self.last_refinement = now;
                self.ingests_since_refinement = 0;
            }
        }
        self.seq = seq;
        Ok(())
    }

    pub fn export_state(&self) -> WeaveState {
        let acknowledged = self
            .graph
            .flag_contradictions(None, &self.particles)
            .unwrap_or_default()
            .into_iter()
            .filter(|r| r.status == crate::graph::ContradictionStatus::Acknowledged)
            .map(|r| r.strand)
            .collect();
        WeaveState {
            seq: self.seq,
            last_refinement: self.last_refinement,
            ingests_since_refinement: self.ingests_since_refinement,
            minted: self.minted,
            acknowledged,
            particles: self.particles.values().cloned().collect(),
            strands: self.graph.strands().cloned().collect(),
        }
    }

    /// Rebuilds a weave from exported state, re-deriving every index.
    pub fn from_state(config: EngineConfig, embedder: Arc<dyn Embedder>, state: WeaveState) -> Result<Self> {
        let mut w = Self::with_embedder(config, embedder)?;
        w.journaling = false;
        for p in state.particles {
            w.upsert(p)?;
        }
        for s in state.strands {
            w.graph.insert_raw(s);
        }
        for id in state.acknowledged {
            w.graph.acknowledge(id)?;
        }
        w.seq = state.seq;
        w.last_refinement = state.last_refinement;
        w.ingests_since_refinement = state.ingests_since_refinement;
        w.minted = state.minted;
        w.journaling = true;
        Ok(w)
    }

    /// Lets tests knock an index out of step with the store.
    #[doc(hidden)]
    pub fn vectors_mut_unchecked(&mut self) -> &mut VectorIndex {
        &mut self.vectors
    }
}
