//! Relational layer: typed, directed, weighted strands between particles.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::id::{ParticleId, StrandId};
use crate::model::{InsightParticle, ParticleKind, RelationalStrand, StrandEvidence, StrandType};
use crate::{Error, Millis, Result};

/// Coefficients of the log-linear strength model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrandWeights {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub bias: f64,
}

impl Default for StrandWeights {
    fn default() -> Self {
        Self { theta1: 1.5, theta2: 0.5, theta3: 2.0, theta4: 0.5, bias: -2.0 }
    }
}

impl StrandWeights {
    pub fn check(&self) -> Result<()> {
        let all = [self.theta1, self.theta2, self.theta3, self.theta4, self.bias];
        if all.iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("strand weights must be finite".into()))
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// logistic(bias + θ1·sim + θ2·ln(1+cooccur) + θ3·conf + θ4·cn/(1+cn)).
pub fn strand_strength(e: &StrandEvidence, w: &StrandWeights) -> Result<f64> {
    e.check()?;
    let cooccur = e.cooccur as f64;
    let cn = e.common_neighbors as f64;
    let score = w.bias
        + w.theta1 * e.sim
        + w.theta2 * libm::log1p(cooccur)
        + w.theta3 * e.conf_soi
        + w.theta4 * (cn / (1.0 + cn));
    Ok(logistic(score))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContradictionStatus {
    Flagged,
    Acknowledged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionRecord {
    pub a: ParticleId,
    pub b: ParticleId,
    pub strand: StrandId,
    pub status: ContradictionStatus,
}

/// Resolves particle ids to kinds; lets the graph check endpoints without owning particles.
pub trait NodeLookup {
    fn kind_of(&self, id: ParticleId) -> Option<ParticleKind>;
}

impl NodeLookup for BTreeMap<ParticleId, InsightParticle> {
    fn kind_of(&self, id: ParticleId) -> Option<ParticleKind> {
        self.get(&id).map(|p| p.kind)
    }
}

#[derive(Debug, Clone, Default)]
pub struct StrandGraph {
    weights: StrandWeights,
    strands: BTreeMap<StrandId, RelationalStrand>,
    by_key: BTreeMap<(ParticleId, ParticleId, StrandType), StrandId>,
    outgoing: BTreeMap<ParticleId, BTreeSet<StrandId>>,
    incoming: BTreeMap<ParticleId, BTreeSet<StrandId>>,
    acknowledged: BTreeSet<StrandId>,
    next_id: u64,
}

impl StrandGraph {
    pub fn new(weights: StrandWeights) -> Self {
        Self { weights, next_id: 1, ..Self::default() }
    }

    pub fn weights(&self) -> &StrandWeights {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.strands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strands.is_empty()
    }

    pub fn get(&self, id: StrandId) -> Option<&RelationalStrand> {
        self.strands.get(&id)
    }

    pub fn strands(&self) -> impl Iterator<Item = &RelationalStrand> + '_ {
        self.strands.values()
    }

    pub fn find(&self, src: ParticleId, dst: ParticleId, t: StrandType) -> Option<&RelationalStrand> {
        self.by_key.get(&(src, dst, t)).and_then(|id| self.strands.get(id))
    }

    /// True if any strand joins `a` and `b` in either direction.
    pub fn linked(&self, a: ParticleId, b: ParticleId) -> bool {
        let joins = |from: ParticleId, to: ParticleId| {
            self.outgoing
                .get(&from)
                .is_some_and(|set| set.iter().any(|s| self.strands[s].dst == to))
        };
        joins(a, b) || joins(b, a)
    }

    pub fn degree(&self, id: ParticleId) -> usize {
        self.outgoing.get(&id).map_or(0, BTreeSet::len) + self.incoming.get(&id).map_or(0, BTreeSet::len)
    }

    /// Distinct particles adjacent to `id`, ignoring direction and type.
    pub fn adjacent(&self, id: ParticleId) -> BTreeSet<ParticleId> {
        let mut out = BTreeSet::new();
        if let Some(set) = self.outgoing.get(&id) {
            out.extend(set.iter().map(|s| self.strands[s].dst));
        }
        if let Some(set) = self.incoming.get(&id) {
            out.extend(set.iter().map(|s| self.strands[s].src));
        }
        out
    }

    pub fn common_neighbors(&self, a: ParticleId, b: ParticleId) -> u64 {
        let na = self.adjacent(a);
        let nb = self.adjacent(b);
        na.intersection(&nb).filter(|&&n| n != a && n != b).count() as u64
    }

    /// Adds a strand, or updates the evidence of the existing (src, dst, type) strand.
    pub fn add_strand(
        &mut self,
        src: ParticleId,
        dst: ParticleId,
        strand_type: StrandType,
        evidence: StrandEvidence,
        now: Millis,
        nodes: &impl NodeLookup,
    ) -> Result<RelationalStrand> {
        if nodes.kind_of(src).is_none() {
            return Err(Error::NotFound(src));
        }
        let dst_kind = nodes.kind_of(dst).ok_or(Error::NotFound(dst))?;
        if src == dst {
            return Err(Error::SelfLoop);
        }
        if strand_type == StrandType::DerivedFrom && dst_kind != ParticleKind::IA {
            return Err(Error::DerivedFromTargetNotIa(dst));
        }
        let strength = strand_strength(&evidence, &self.weights)?;
        if let Some(&id) = self.by_key.get(&(src, dst, strand_type)) {
            let s = self.strands.get_mut(&id).ok_or(Error::StrandNotFound(id.0))?;
            s.evidence = evidence;
            s.strength = strength;
            return Ok(s.clone());
        }
        let id = StrandId(self.next_id);
        let strand = RelationalStrand { id, src, dst, strand_type, strength, evidence, t_create: now };
        self.insert_raw(strand.clone());
        Ok(strand)
    }

    /// Inserts a strand verbatim, bypassing endpoint checks. Used by log replay
    /// and fixture import; `audit` catches anything inconsistent.
    pub fn insert_raw(&mut self, strand: RelationalStrand) {
        if let Some(old) = self.strands.get(&strand.id).cloned() {
            self.unlink(&old);
        }
        if let Some(&other) = self.by_key.get(&(strand.src, strand.dst, strand.strand_type)) {
            if other != strand.id {
                if let Some(old) = self.strands.get(&other).cloned() {
                    self.unlink(&old);
                }
            }
        }
        self.next_id = self.next_id.max(strand.id.0 + 1);
        self.by_key.insert((strand.src, strand.dst, strand.strand_type), strand.id);
        self.outgoing.entry(strand.src).or_default().insert(strand.id);
        self.incoming.entry(strand.dst).or_default().insert(strand.id);
        self.strands.insert(strand.id, strand);
    }

    fn unlink(&mut self, s: &RelationalStrand) {
        self.strands.remove(&s.id);
        self.by_key.remove(&(s.src, s.dst, s.strand_type));
        self.acknowledged.remove(&s.id);
        for (map, key) in [(&mut self.outgoing, s.src), (&mut self.incoming, s.dst)] {
            if let Some(set) = map.get_mut(&key) {
                set.remove(&s.id);
                if set.is_empty() {
                    map.remove(&key);
                }
            }
        }
    }

    pub fn remove_strand(&mut self, id: StrandId) -> Result<RelationalStrand> {
        let s = self.strands.get(&id).cloned().ok_or(Error::StrandNotFound(id.0))?;
        self.unlink(&s);
        Ok(s)
    }

    /// Drops every strand incident to `id`, returning them in id order.
    pub fn remove_node(&mut self, id: ParticleId) -> Vec<RelationalStrand> {
        let mut ids: BTreeSet<StrandId> = BTreeSet::new();
        if let Some(set) = self.outgoing.get(&id) {
            ids.extend(set.iter().copied());
        }
        if let Some(set) = self.incoming.get(&id) {
            ids.extend(set.iter().copied());
        }
        let mut removed = Vec::with_capacity(ids.len());
        for sid in ids {
            if let Some(s) = self.strands.get(&sid).cloned() {
                self.unlink(&s);
                removed.push(s);
            }
        }
        removed
    }

    /// Incident strands passing the filters, strongest first (ties by strand id).
    pub fn neighbors(
        &self,
        id: ParticleId,
        type_filter: Option<StrandType>,
        min_strength: f64,
        nodes: &impl NodeLookup,
    ) -> Result<Vec<(RelationalStrand, Direction)>> {
        if nodes.kind_of(id).is_none() {
            return Err(Error::NotFound(id));
        }
        let mut out = Vec::new();
        let dirs = [(Direction::Outgoing, self.outgoing.get(&id)), (Direction::Incoming, self.incoming.get(&id))];
        for (dir, set) in dirs {
            for sid in set.into_iter().flatten() {
                let s = &self.strands[sid];
                if type_filter.is_none_or(|t| t == s.strand_type) && s.strength >= min_strength {
                    out.push((s.clone(), dir));
                }
            }
        }
        out.sort_by(|(a, da), (b, db)| {
            b.strength.total_cmp(&a.strength).then(a.id.cmp(&b.id)).then(da.cmp(db))
        });
        Ok(out)
    }

    /// Constituents of an aggregate: sources of derivedFrom strands into `ia`, id-sorted.
    pub fn provenance(&self, ia: ParticleId, nodes: &impl NodeLookup) -> Result<Vec<ParticleId>> {
        match nodes.kind_of(ia) {
            None => Err(Error::NotFound(ia)),
            Some(ParticleKind::IP) => Err(Error::NotAnIa(ia)),
            Some(ParticleKind::IA) => Ok(self.provenance_unchecked(ia)),
        }
    }

    pub fn provenance_unchecked(&self, ia: ParticleId) -> Vec<ParticleId> {
        let mut out: Vec<ParticleId> = self
            .incoming
            .get(&ia)
            .into_iter()
            .flatten()
            .map(|sid| &self.strands[sid])
            .filter(|s| s.strand_type == StrandType::DerivedFrom)
            .map(|s| s.src)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Outgoing derivedFrom strands of `id` (its links into aggregates).
    pub fn aggregate_links(&self, id: ParticleId) -> impl Iterator<Item = &RelationalStrand> + '_ {
        self.outgoing
            .get(&id)
            .into_iter()
            .flatten()
            .map(|sid| &self.strands[sid])
            .filter(|s| s.strand_type == StrandType::DerivedFrom)
    }

    /// Every simple path of outgoing strands from `start` with 1..=max_depth
    /// hops, in lexicographic order of strand-id sequences.
    pub fn traverse(
        &self,
        start: ParticleId,
        max_depth: usize,
        type_filter: Option<StrandType>,
        min_strength: f64,
        nodes: &impl NodeLookup,
    ) -> Result<Vec<Vec<StrandId>>> {
        if nodes.kind_of(start).is_none() {
            return Err(Error::NotFound(start));
        }
        if max_depth == 0 {
            return Err(Error::InvalidQuery("max_depth must be at least 1"));
        }
        let mut paths = Vec::new();
        // (path of strands, nodes visited along it, current tip)
        let mut queue: VecDeque<(Vec<StrandId>, Vec<ParticleId>, ParticleId)> = VecDeque::new();
        queue.push_back((Vec::new(), alloc::vec![start], start));
        while let Some((path, seen, tip)) = queue.pop_front() {
            if path.len() == max_depth {
                continue;
            }
            for sid in self.outgoing.get(&tip).into_iter().flatten() {
                let s = &self.strands[sid];
                if type_filter.is_some_and(|t| t != s.strand_type) || s.strength < min_strength {
                    continue;
                }
                if seen.contains(&s.dst) {
                    continue;
                }
                let mut next = path.clone();
                next.push(*sid);
                let mut next_seen = seen.clone();
                next_seen.push(s.dst);
                paths.push(next.clone());
                queue.push_back((next, next_seen, s.dst));
            }
        }
        paths.sort();
        Ok(paths)
    }

    /// One record per contradicts strand, restricted to strands incident to `scope` when given.
    pub fn flag_contradictions(
        &self,
        scope: Option<ParticleId>,
        nodes: &impl NodeLookup,
    ) -> Result<Vec<ContradictionRecord>> {
        if let Some(id) = scope {
            if nodes.kind_of(id).is_none() {
                return Err(Error::NotFound(id));
            }
        }
        Ok(self
            .strands
            .values()
            .filter(|s| s.strand_type == StrandType::Contradicts)
            .filter(|s| scope.is_none_or(|id| s.src == id || s.dst == id))
            .map(|s| ContradictionRecord {
                a: s.src,
                b: s.dst,
                strand: s.id,
                status: if self.acknowledged.contains(&s.id) {
                    ContradictionStatus::Acknowledged
                } else {
                    ContradictionStatus::Flagged
                },
            })
            .collect())
    }

    pub fn acknowledge(&mut self, strand: StrandId) -> Result<()> {
        match self.strands.get(&strand) {
            Some(s) if s.strand_type == StrandType::Contradicts => {
                self.acknowledged.insert(strand);
                Ok(())
            }
            Some(_) => Err(Error::InvalidQuery("only contradicts strands can be acknowledged")),
            None => Err(Error::StrandNotFound(strand.0)),
        }
    }

    /// Unacknowledged contradicts strands incident to `id`.
    pub fn open_contradictions(&self, id: ParticleId) -> usize {
        let count = |set: Option<&BTreeSet<StrandId>>| {
            set.into_iter()
                .flatten()
                .filter(|sid| {
                    self.strands[*sid].strand_type == StrandType::Contradicts && !self.acknowledged.contains(sid)
                })
                .count()
        };
        count(self.outgoing.get(&id)) + count(self.incoming.get(&id))
    }

    /// Every particle id mentioned by any strand.
    pub fn endpoints(&self) -> BTreeSet<ParticleId> {
        self.outgoing.keys().chain(self.incoming.keys()).copied().collect()
    }
}
