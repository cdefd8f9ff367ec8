//! Cognitive refinement: importance decay and recalibration, composite-affinity
//! clustering, the aggregate objective, and the full refinement cycle.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, dot, Embedder};
use crate::id::ParticleId;
use crate::model::{
    AccessMetrics, InsightParticle, ParticleKind, Signifier, SituationalImprint, StrandEvidence, StrandType,
    TemporalMetadata,
};
use crate::oracle::{Constituent, ParticleView, SemanticOracle, SynthesisRequest, SynthesisResult, TemporalSummary};
use crate::text::char_len;
use crate::weave::{Cascade, EngineStats, Weave};
use crate::{Error, Millis, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub tau_cluster: f64,
    pub w_sem: f64,
    pub w_rel: f64,
    pub w_temp: f64,
    /// Temporal coherence scale, ms.
    pub sigma_t: f64,
    pub min_cluster_size: usize,
    pub q_min: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            tau_cluster: 0.60,
            w_sem: 0.6,
            w_rel: 0.2,
            w_temp: 0.2,
            sigma_t: 86_400_000.0,
            min_cluster_size: 3,
            q_min: 0.55,
        }
    }
}

impl ClusterConfig {
    pub fn check(&self) -> Result<()> {
        let sum = self.w_sem + self.w_rel + self.w_temp;
        if !(self.tau_cluster > 0.0 && self.tau_cluster < 1.0) {
            return Err(Error::Config("tau_cluster must lie in (0,1)".into()));
        }
        if (sum - 1.0).abs() > 1e-9 || self.w_sem < 0.0 || self.w_rel < 0.0 || self.w_temp < 0.0 {
            return Err(Error::Config("affinity weights must be non-negative and sum to 1".into()));
        }
        if self.min_cluster_size < 2 {
            return Err(Error::Config("min_cluster_size must be at least 2".into()));
        }
        if !(self.sigma_t > 0.0) {
            return Err(Error::Config("sigma_t must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementTriggers {
    /// ms
    pub period: i64,
    pub ingest_count_threshold: u64,
    pub fragmentation_threshold: f64,
}

impl Default for RefinementTriggers {
    fn default() -> Self {
        Self { period: 3_600_000, ingest_count_threshold: 100, fragmentation_threshold: 0.5 }
    }
}

impl RefinementTriggers {
    pub fn check(&self) -> Result<()> {
        if self.period <= 0 || self.ingest_count_threshold == 0 || !(self.fragmentation_threshold > 0.0) {
            return Err(Error::Config("refinement triggers must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IAObjectiveWeights {
    /// Per-constituent weights; empty means uniform.
    pub omega: Vec<f64>,
    /// Per character.
    pub lambda_comp: f64,
}

impl Default for IAObjectiveWeights {
    fn default() -> Self {
        Self { omega: Vec::new(), lambda_comp: 0.01 }
    }
}

impl IAObjectiveWeights {
    pub fn check(&self) -> Result<()> {
        if self.omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !(self.lambda_comp >= 0.0) {
            return Err(Error::Config("objective weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Normalized weights for `n` constituents.
    pub fn normalized(&self, n: usize) -> Result<Vec<f64>> {
        if self.omega.is_empty() {
            return Ok(alloc::vec![1.0 / n as f64; n]);
        }
        if self.omega.len() != n {
            return Err(Error::Config(format!("omega has {} weights for {n} constituents", self.omega.len())));
        }
        let sum: f64 = self.omega.iter().sum();
        if sum <= 0.0 {
            return Ok(alloc::vec![1.0 / n as f64; n]);
        }
        Ok(self.omega.iter().map(|w| w / sum).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecalibrationCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub f_cap: u64,
    pub delta_contra: f64,
}

impl Default for RecalibrationCoeffs {
    fn default() -> Self {
        Self { alpha: 0.85, beta: 0.10, gamma: 0.05, f_cap: 20, delta_contra: 0.1 }
    }
}

impl RecalibrationCoeffs {
    pub fn check(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.alpha)
            && self.beta >= 0.0
            && self.gamma >= 0.0
            && self.alpha + self.beta + self.gamma <= 1.0 + 1e-12
            && self.f_cap >= 1
            && self.delta_contra >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("recalibration coefficients out of range".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayParams {
    /// Per ms.
    pub lambda_decay: f64,
    pub i_base: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self { lambda_decay: 8.0e-9, i_base: 0.05 }
    }
}

impl DecayParams {
    pub fn check(&self) -> Result<()> {
        if !(self.lambda_decay > 0.0 && self.lambda_decay.is_finite()) || !(0.0..1.0).contains(&self.i_base) {
            return Err(Error::Config("decay needs lambda_decay > 0 and i_base in [0,1)".into()));
        }
        Ok(())
    }
}

/// Exponential relaxation of `i0` toward `i_base` after `dt` ms. `dt` is
/// real-valued so the half-life ln2/λ can be hit exactly.
pub fn decay_importance(i0: f64, p: &DecayParams, dt: f64) -> Result<f64> {
    if dt < 0.0 || dt.is_nan() {
        return Err(Error::NegativeDuration);
    }
    if dt == 0.0 || i0 == p.i_base {
        return Ok(i0);
    }
    Ok((i0 - p.i_base) * libm::exp(-p.lambda_decay * dt) + p.i_base)
}

/// Importance of `p` as of `now`, without mutating it.
pub fn current_importance(p: &InsightParticle, decay: &DecayParams, now: Millis) -> f64 {
    let dt = (now - p.metrics.last_recalibrated).max(0);
    decay_importance(p.metrics.importance, decay, dt as f64).unwrap_or(p.metrics.importance)
}

/// Linear recalibration:
/// clamp(α·I_old + β·min(f, f_cap)/f_cap + γ·mean(links) − δ·flags + extra, 0, 1).
pub fn recalibrated_importance(
    i_old: f64,
    f_access: u64,
    ia_link_strengths: &[f64],
    contradiction_flags: u64,
    coeffs: &RecalibrationCoeffs,
    extra_signal: f64,
) -> f64 {
    let cap = coeffs.f_cap.max(1);
    let access = f_access.min(cap) as f64 / cap as f64;
    let links = if ia_link_strengths.is_empty() {
        0.0
    } else {
        ia_link_strengths.iter().sum::<f64>() / ia_link_strengths.len() as f64
    };
    let raw = coeffs.alpha * i_old + coeffs.beta * access + coeffs.gamma * links
        - coeffs.delta_contra * contradiction_flags as f64
        + extra_signal;
    raw.clamp(0.0, 1.0)
}

/// Recalibrates one particle view, returning the particle with its new
/// importance and `last_recalibrated = now`.
pub fn recalibrate_importance(
    p: &InsightParticle,
    ia_link_strengths: &[f64],
    coeffs: &RecalibrationCoeffs,
    contradiction_flags: u64,
    now: Millis,
) -> InsightParticle {
    let mut out = p.clone();
    out.metrics.importance =
        recalibrated_importance(p.metrics.importance, p.metrics.f_access, ia_link_strengths, contradiction_flags, coeffs, 0.0);
    out.metrics.last_recalibrated = now;
    out
}

/// One particle as seen by the clustering step.
#[derive(Debug, Clone, Copy)]
pub struct ClusterItem<'a> {
    pub id: ParticleId,
    pub vector: &'a [f64],
    pub t_create: Millis,
}

pub fn affinity(sim: f64, linked: bool, dt_ms: i64, cfg: &ClusterConfig) -> f64 {
    let rel = if linked { 1.0 } else { 0.0 };
    let temp = libm::exp(-(dt_ms.unsigned_abs() as f64) / cfg.sigma_t);
    cfg.w_sem * sim + cfg.w_rel * rel + cfg.w_temp * temp
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins, keeps the structure independent of merge order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-link agglomerative clustering over the composite affinity: every
/// pair with affinity ≥ τ is merged, and clusters under `min_cluster_size` are
/// dropped. Single-link with a fixed threshold yields the connected
/// components of the thresholded affinity graph, so the result does not
/// depend on merge order. Clusters are id-sorted, ordered by first member.
pub fn identify_clusters(
    items: &[ClusterItem<'_>],
    linked: impl Fn(ParticleId, ParticleId) -> bool,
    cfg: &ClusterConfig,
) -> Vec<Vec<ParticleId>> {
    let n = items.len();
    let mut sets = DisjointSet::new(n);
    // Affinity cannot reach τ when even a perfect relational and temporal score leaves too much to cosine.
    let sim_floor = if cfg.w_sem > 0.0 { (cfg.tau_cluster - cfg.w_rel - cfg.w_temp) / cfg.w_sem } else { f64::NEG_INFINITY };
    for i in 0..n {
        for j in i + 1..n {
            let sim = similarity(items[i].vector, items[j].vector);
            if sim < sim_floor {
                continue;
            }
            let dt = items[i].t_create - items[j].t_create;
            if affinity(sim, linked(items[i].id, items[j].id), dt, cfg) >= cfg.tau_cluster {
                sets.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<ParticleId>> = BTreeMap::new();
    for i in 0..n {
        let root = sets.find(i);
        groups.entry(root).or_default().push(items[i].id);
    }
    let mut clusters: Vec<Vec<ParticleId>> = groups
        .into_values()
        .filter(|g| g.len() >= cfg.min_cluster_size)
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    clusters.sort();
    clusters
}

/// Cosine of two unit vectors, exact 1.0 for identical vectors.
fn similarity(u: &[f64], v: &[f64]) -> f64 {
    if u == v {
        1.0
    } else {
        dot(u, v).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub score: f64,
    pub accept: bool,
}

/// Mean pairwise cosine of the members; accepted iff ≥ q_min and the cluster is large enough.
pub fn cluster_quality(vectors: &[&[f64]], cfg: &ClusterConfig) -> QualityVerdict {
    let n = vectors.len();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            total += cosine(vectors[i], vectors[j]).unwrap_or(0.0);
            pairs += 1;
        }
    }
    let score = if pairs == 0 { 0.0 } else { total / pairs as f64 };
    QualityVerdict { score, accept: n >= cfg.min_cluster_size && score >= cfg.q_min }
}

/// ℒ = −Σ ωᵢ·cos(embed(candidate), vᵢ) + λ·chars(candidate). Lower is better.
pub fn ia_objective(
    candidate: &SynthesisResult,
    constituent_vectors: &[&[f64]],
    weights: &IAObjectiveWeights,
    embedder: &dyn Embedder,
) -> Result<f64> {
    if constituent_vectors.is_empty() {
        return Err(Error::TooFewConstituents { need: 1, got: 0 });
    }
    let omega = weights.normalized(constituent_vectors.len())?;
    let v = embedder.embed(&candidate.ia_core_data)?;
    let mut relevance = 0.0;
    for (w, c) in omega.iter().zip(constituent_vectors) {
        relevance += w * cosine(&v, c)?;
    }
    Ok(-relevance + weights.lambda_comp * char_len(&candidate.ia_core_data) as f64)
}

/// Which trigger fired, checked in priority order: period, ingest count, fragmentation.
pub fn should_refine(stats: &EngineStats, triggers: &RefinementTriggers, now: Millis) -> Option<&'static str> {
    if now - stats.last_refinement >= triggers.period {
        Some("period")
    } else if stats.ingests_since_refinement >= triggers.ingest_count_threshold {
        Some("ingest_count")
    } else if stats.fragmentation >= triggers.fragmentation_threshold {
        Some("fragmentation")
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RefinementReport {
    pub clusters_considered: usize,
    pub clusters_accepted: usize,
    pub clusters_already_covered: usize,
    pub ias_created: Vec<ParticleId>,
    pub ia_objectives: Vec<(ParticleId, f64)>,
    pub strands_added: usize,
    pub importances_changed: usize,
    pub contradictions_flagged: usize,
    pub particles_pruned: Vec<ParticleId>,
    pub errors: Vec<String>,
    /// Filled in by the caller that owns a clock.
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PairKey(ParticleId, ParticleId);

#[derive(Debug, Clone, Copy)]
struct ScoredPair {
    sim: f64,
    key: PairKey,
}

impl PartialEq for ScoredPair {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for ScoredPair {}
impl PartialOrd for ScoredPair {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ScoredPair {
    /// Greater = more similar, then smaller id pair.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.key.cmp(&self.key))
    }
}

/// Runs one refinement cycle in place: recalibrate → cluster → quality gate →
/// synthesize → strand suggestion → prune.
pub fn refinement_cycle(weave: &mut Weave, oracle: &dyn SemanticOracle, now: Millis) -> RefinementReport {
    let mut report = RefinementReport::default();
    let cfg = weave.config().clone();

    // 1. decay + recalibration
    report.contradictions_flagged = weave.graph().flag_contradictions(None, weave.particles()).map_or(0, |r| r.len());
    let ids: Vec<ParticleId> = weave.particles().keys().copied().collect();
    for id in &ids {
        let p = &weave.particles()[id];
        let decayed = current_importance(p, &cfg.decay, now);
        let links: Vec<f64> = weave.graph().aggregate_links(*id).map(|s| s.strength).collect();
        let flags = weave.graph().open_contradictions(*id) as u64;
        let new_imp = recalibrated_importance(decayed, p.metrics.f_access, &links, flags, &cfg.recalibration, 0.0);
        if new_imp != p.metrics.importance {
            report.importances_changed += 1;
        }
        let metrics = AccessMetrics {
            importance: new_imp,
            last_recalibrated: now.max(p.metrics.last_recalibrated),
            ..p.metrics
        };
        if metrics != p.metrics {
            weave.set_metrics(*id, metrics);
        }
    }

    // 2. clusters over aggregates' potential constituents
    let items_owned: Vec<(ParticleId, Millis)> = weave
        .particles()
        .values()
        .filter(|p| p.kind == ParticleKind::IP)
        .map(|p| (p.id, p.temporal.t_create))
        .collect();
    let clusters = {
        let items: Vec<ClusterItem<'_>> = items_owned
            .iter()
            .filter_map(|&(id, t)| weave.vectors().vector(id).map(|v| ClusterItem { id, vector: v, t_create: t }))
            .collect();
        identify_clusters(&items, |a, b| weave.graph().linked(a, b), &cfg.cluster)
    };

    // 3. quality gate, coverage skip, synthesis
    let covered: Vec<BTreeSet<ParticleId>> = weave
        .particles()
        .values()
        .filter(|p| p.is_ia() && !p.is_stale())
        .map(|p| weave.graph().provenance_unchecked(p.id).into_iter().collect())
        .collect();
    for cluster in clusters {
        report.clusters_considered += 1;
        let verdict = {
            let vs: Vec<&[f64]> = cluster.iter().filter_map(|id| weave.vectors().vector(*id)).collect();
            cluster_quality(&vs, &cfg.cluster)
        };
        if !verdict.accept {
            continue;
        }
        report.clusters_accepted += 1;
        if covered.iter().any(|prov| cluster.iter().all(|id| prov.contains(id))) {
            report.clusters_already_covered += 1;
            continue;
        }
        match synthesize_ia(weave, &cluster, oracle, now) {
            Ok((ia, objective, strands)) => {
                report.ias_created.push(ia);
                report.ia_objectives.push((ia, objective));
                report.strands_added += strands;
            }
            Err(e) => report.errors.push(format!("cluster starting {}: {e}", cluster[0])),
        }
    }

    // 4. strand suggestion over the most similar unlinked pairs
    suggest_strands(weave, oracle, now, &mut report);

    // 5. prune
    match prune(weave, cfg.prune.importance_floor, now) {
        Ok(pruned) => report.particles_pruned = pruned,
        Err(e) => report.errors.push(format!("prune: {e}")),
    }
    weave.mark_refined(now);
    report
}

/// Synthesizes one aggregate from an accepted cluster. Nothing is written
/// unless the oracle succeeds and its result validates.
pub fn synthesize_ia(
    weave: &mut Weave,
    cluster: &[ParticleId],
    oracle: &dyn SemanticOracle,
    now: Millis,
) -> Result<(ParticleId, f64, usize)> {
    let cfg = weave.config().clone();
    let mut constituents = Vec::with_capacity(cluster.len());
    let mut importance_sum = 0.0;
    for id in cluster {
        let p = weave.get(*id)?;
        importance_sum += p.metrics.importance;
        constituents.push(Constituent {
            id: p.id,
            core_data: p.core_data.clone(),
            resonance_keys: p.resonance_keys.clone(),
            temporal: TemporalSummary {
                t_create: p.temporal.t_create,
                t_event_start: p.temporal.t_event_start,
                t_event_end: p.temporal.t_event_end,
            },
        });
    }
    let request = SynthesisRequest { constituents, prompt_params: BTreeMap::new() };
    request.check(cfg.cluster.min_cluster_size)?;
    let result = oracle.synthesize(&request)?;
    result.check(&request)?;

    let objective = {
        let vs: Vec<&[f64]> = cluster.iter().filter_map(|id| weave.vectors().vector(*id)).collect();
        ia_objective(&result, &vs, &cfg.objective, weave.embedder())?
    };
    let mut keys: BTreeSet<String> = result.ia_resonance_keys.iter().map(|k| k.to_lowercase()).filter(|k| !k.is_empty()).collect();
    if keys.is_empty() {
        keys = request.constituents.iter().flat_map(|c| c.resonance_keys.iter().cloned()).take(1).collect();
    }
    let mut signifiers = BTreeSet::new();
    signifiers.insert(Signifier::Assertion);
    let importance = (importance_sum / cluster.len() as f64 + 0.1).clamp(0.0, 1.0);
    let ia = InsightParticle {
        id: weave.mint_id(now),
        core_data: result.ia_core_data.clone(),
        resonance_keys: keys,
        signifiers,
        imprint: SituationalImprint::from_source("refinement"),
        temporal: TemporalMetadata::created_at(now),
        metrics: AccessMetrics { f_access: 0, importance, last_recalibrated: now },
        kind: ParticleKind::IA,
    };
    // Embedding failure would leave a half-built aggregate; check before writing.
    let ia_vec = weave.embedder().embed(&ia.core_data)?;
    let ia_id = weave.put(ia)?;
    let mut strands = 0;
    for id in cluster {
        let sim = weave.vectors().vector(*id).map_or(Ok(0.0), |v| cosine(v, &ia_vec))?;
        let evidence = StrandEvidence { sim, cooccur: 0, conf_soi: result.confidence, common_neighbors: 0 };
        weave.add_strand(*id, ia_id, StrandType::DerivedFrom, evidence, now)?;
        strands += 1;
    }
    Ok((ia_id, objective, strands))
}

fn suggest_strands(weave: &mut Weave, oracle: &dyn SemanticOracle, now: Millis, report: &mut RefinementReport) {
    let budget = weave.config().refinement.suggestion_pairs;
    if budget == 0 {
        return;
    }
    let ids: Vec<ParticleId> =
        weave.particles().values().filter(|p| p.kind == ParticleKind::IP).map(|p| p.id).collect();
    let mut best: BinaryHeap<Reverse<ScoredPair>> = BinaryHeap::new();
    for i in 0..ids.len() {
        let Some(vi) = weave.vectors().vector(ids[i]) else { continue };
        for j in i + 1..ids.len() {
            let Some(vj) = weave.vectors().vector(ids[j]) else { continue };
            let cand = ScoredPair { sim: similarity(vi, vj), key: PairKey(ids[i], ids[j]) };
            if best.len() >= budget {
                if let Some(Reverse(worst)) = best.peek() {
                    if cand <= *worst {
                        continue;
                    }
                }
            }
            if weave.graph().linked(ids[i], ids[j]) {
                continue;
            }
            best.push(Reverse(cand));
            if best.len() > budget {
                best.pop();
            }
        }
    }
    let mut pairs: Vec<ScoredPair> = best.into_iter().map(|Reverse(p)| p).collect();
    pairs.sort_by(|a, b| b.cmp(a));
    for pair in pairs {
        let PairKey(a, b) = pair.key;
        let (Ok(pa), Ok(pb)) = (weave.get(a), weave.get(b)) else { continue };
        let va = ParticleView { id: a, core_data: pa.core_data.clone(), resonance_keys: pa.resonance_keys.clone() };
        let vb = ParticleView { id: b, core_data: pb.core_data.clone(), resonance_keys: pb.resonance_keys.clone() };
        match oracle.suggest_relation(&va, &vb).and_then(|s| {
            if let Some(s) = &s {
                s.check()?;
            }
            Ok(s)
        }) {
            Ok(Some(s)) => {
                let evidence = StrandEvidence {
                    sim: pair.sim,
                    cooccur: 0,
                    conf_soi: s.confidence,
                    common_neighbors: weave.graph().common_neighbors(a, b),
                };
                match weave.add_strand(a, b, s.strand_type, evidence, now) {
                    Ok(_) => report.strands_added += 1,
                    Err(e) => report.errors.push(format!("suggested strand {a}->{b}: {e}")),
                }
            }
            Ok(None) => {}
            Err(e) => report.errors.push(format!("suggest {a}/{b}: {e}")),
        }
    }
}

/// Deletes every unprotected particle whose importance at `now` is below
/// `floor`. Aggregates and provenance members are protected.
pub fn prune(weave: &mut Weave, floor: f64, now: Millis) -> Result<Vec<ParticleId>> {
    let decay = weave.config().decay;
    let mut protected: BTreeSet<ParticleId> = BTreeSet::new();
    for p in weave.particles().values().filter(|p| p.is_ia()) {
        protected.insert(p.id);
        protected.extend(weave.graph().provenance_unchecked(p.id));
    }
    let doomed: Vec<ParticleId> = weave
        .particles()
        .values()
        .filter(|p| !protected.contains(&p.id))
        .filter(|p| current_importance(p, &decay, now) < floor)
        .map(|p| p.id)
        .collect();
    for id in &doomed {
        weave.delete(*id, Cascade::StrandsAndFlagIas)?;
    }
    Ok(doomed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_boundaries() {
        let p = DecayParams::default();
        assert_eq!(decay_importance(0.73, &p, 0.0).unwrap(), 0.73);
        assert_eq!(decay_importance(0.5, &p, -1.0), Err(Error::NegativeDuration));
        let far = decay_importance(1.0, &p, 1e16).unwrap();
        assert!((far - p.i_base).abs() <= 1e-9);
        assert_eq!(decay_importance(p.i_base, &p, 12345.0).unwrap(), p.i_base);
    }

    #[test]
    fn half_life() {
        let p = DecayParams { lambda_decay: 8.0e-9, i_base: 0.0 };
        let half = core::f64::consts::LN_2 / p.lambda_decay;
        let got = decay_importance(1.0, &p, half).unwrap();
        assert!((got - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn recalibration_worked_example() {
        let c = RecalibrationCoeffs::default();
        let v = recalibrated_importance(0.5, 20, &[1.0], 0, &c, 0.0);
        assert!((v - 0.575).abs() <= 1e-12);
        assert_eq!(recalibrated_importance(0.4, 0, &[], 0, &c, 0.0), 0.85 * 0.4);
        assert_eq!(recalibrated_importance(0.4, 0, &[], 50, &c, 0.0), 0.0);
        assert_eq!(recalibrated_importance(1.0, 100, &[1.0], 0, &c, 0.5), 1.0);
    }

    #[test]
    fn affinity_of_identical_linked_simultaneous_pair_is_one() {
        let cfg = ClusterConfig::default();
        assert!((affinity(1.0, true, 0, &cfg) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quality_size_gate() {
        let cfg = ClusterConfig::default();
        let v: &[f64] = &[1.0, 0.0];
        let two = cluster_quality(&[v, v], &cfg);
        assert_eq!(two.score, 1.0);
        assert!(!two.accept);
        assert!(cluster_quality(&[v, v, v], &cfg).accept);
    }

    #[test]
    fn config_checks() {
        assert!(ClusterConfig::default().check().is_ok());
        assert!(ClusterConfig { w_sem: 0.5, ..ClusterConfig::default() }.check().is_err());
        assert!(ClusterConfig { min_cluster_size: 1, ..ClusterConfig::default() }.check().is_err());
        assert!(RecalibrationCoeffs::default().check().is_ok());
        assert!(RecalibrationCoeffs { alpha: 0.9, beta: 0.1, gamma: 0.1, ..Default::default() }.check().is_err());
        assert!(DecayParams { lambda_decay: 0.0, i_base: 0.0 }.check().is_err());
        assert!(IAObjectiveWeights::default().normalized(4).unwrap().iter().all(|w| *w == 0.25));
        let w = IAObjectiveWeights { omega: alloc::vec![1.0, 3.0], lambda_comp: 0.0 };
        assert_eq!(w.normalized(2).unwrap(), [0.25, 0.75]);
        assert!(w.normalized(3).is_err());
    }
}
