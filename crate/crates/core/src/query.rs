//! Hybrid recall: temporal prefilter, vector ranking, graph expansion.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::id::{ParticleId, StrandId};
use crate::model::{InsightParticle, StrandType};
use crate::refine::current_importance;
use crate::temporal::TemporalField;
use crate::vector::KnnHit;
use crate::weave::Weave;
use crate::{Error, Millis, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub field: TemporalField,
    pub lo: Millis,
    pub hi: Millis,
}

impl TimeWindow {
    pub fn contains(&self, p: &InsightParticle) -> bool {
        self.field.get(&p.temporal).is_some_and(|t| self.lo <= t && t <= self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphExpand {
    #[serde(default = "one")]
    pub max_depth: usize,
    #[serde(default)]
    pub type_filter: Option<StrandType>,
    #[serde(default)]
    pub min_strength: f64,
}

fn one() -> usize {
    1
}

fn default_k() -> usize {
    10
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub time_window: Option<TimeWindow>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub graph_expand: Option<GraphExpand>,
    #[serde(default)]
    pub min_importance: f64,
    #[serde(default = "yes")]
    pub use_ann: bool,
    #[serde(default)]
    pub user_tag: Option<String>,
}

impl Default for QuerySpec {
    fn default() -> Self {
        Self {
            text: None,
            time_window: None,
            k: default_k(),
            graph_expand: None,
            min_importance: 0.0,
            use_ann: true,
            user_tag: None,
        }
    }
}

impl QuerySpec {
    pub fn text(text: impl Into<String>, k: usize) -> Self {
        Self { text: Some(text.into()), k, ..Self::default() }
    }

    pub fn window(field: TemporalField, lo: Millis, hi: Millis, k: usize) -> Self {
        Self { time_window: Some(TimeWindow { field, lo, hi }), k, ..Self::default() }
    }

    pub fn check(&self) -> Result<()> {
        if self.text.is_none() && self.time_window.is_none() {
            return Err(Error::InvalidQuery("a query needs text or a time_window"));
        }
        if self.text.as_deref().is_some_and(|t| t.trim().is_empty()) {
            return Err(Error::InvalidQuery("query text is empty"));
        }
        if self.k == 0 {
            return Err(Error::InvalidQuery("k must be positive"));
        }
        if let Some(w) = self.time_window {
            if w.lo > w.hi {
                return Err(Error::InvertedRange { lo: w.lo, hi: w.hi });
            }
        }
        if let Some(g) = self.graph_expand {
            if g.max_depth == 0 {
                return Err(Error::InvalidQuery("graph_expand.max_depth must be at least 1"));
            }
            if !g.min_strength.is_finite() {
                return Err(Error::InvalidQuery("graph_expand.min_strength must be finite"));
            }
        }
        if !self.min_importance.is_finite() {
            return Err(Error::InvalidQuery("min_importance must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallHit {
    pub id: ParticleId,
    pub relevance: f64,
    /// Strands walked from a direct hit; absent for direct hits.
    pub provenance_path: Option<Vec<StrandId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub hits: Vec<RecallHit>,
    pub snapshot_seq: u64,
    pub latency_ms: f64,
}

impl RecallResult {
    /// Checks ordering, the direct-hit bound and score sanity.
    pub fn check(&self, k: usize) -> Result<()> {
        if self.hits.windows(2).any(|w| relevance_order(&w[0], &w[1]) != Ordering::Less) {
            return Err(Error::Validation("hits are not sorted by relevance, then id".into()));
        }
        if self.hits.iter().filter(|h| h.provenance_path.is_none()).count() > k {
            return Err(Error::Validation("more than k direct hits".into()));
        }
        if self.hits.iter().any(|h| !h.relevance.is_finite()) {
            return Err(Error::Validation("non-finite relevance".into()));
        }
        Ok(())
    }
}

/// Descending relevance, then ascending id.
pub fn relevance_order(a: &RecallHit, b: &RecallHit) -> Ordering {
    b.relevance.total_cmp(&a.relevance).then_with(|| a.id.cmp(&b.id))
}

/// Runs the three-stage pipeline against `weave` without touching anything.
/// `latency_ms` is left at zero for the caller to fill in.
pub fn execute(weave: &Weave, spec: &QuerySpec, now: Millis) -> Result<RecallResult> {
    spec.check()?;
    let cfg = weave.config();
    let particles = weave.particles();
    let importance = |p: &InsightParticle| current_importance(p, &cfg.decay, now);
    let keep = |p: &InsightParticle| {
        spec.time_window.is_none_or(|w| w.contains(p))
            && spec.user_tag.as_ref().is_none_or(|tag| p.imprint.user_tag.as_ref() == Some(tag))
    };

    let mut direct: Vec<RecallHit> = Vec::new();
    if let Some(text) = &spec.text {
        if weave.vectors().is_empty() {
            return Err(Error::EmptyIndex);
        }
        let q = weave.embedder().embed(text)?;
        let knn = knn_stage(weave, spec, &q, &keep)?;
        for h in knn {
            let Some(p) = particles.get(&h.id) else { continue };
            let relevance = cfg.query.similarity_weight * h.score + cfg.query.importance_weight * importance(p);
            direct.push(RecallHit { id: h.id, relevance, provenance_path: None });
        }
    } else if let Some(w) = spec.time_window {
        for id in weave.temporal().range_iter(w.field, w.lo, w.hi)? {
            let Some(p) = particles.get(&id) else { continue };
            if keep(p) {
                direct.push(RecallHit { id, relevance: importance(p), provenance_path: None });
            }
        }
    }
    direct.sort_by(relevance_order);
    direct.truncate(spec.k);

    let mut best: BTreeMap<ParticleId, RecallHit> = BTreeMap::new();
    for h in &direct {
        best.insert(h.id, h.clone());
    }
    if let Some(g) = spec.graph_expand {
        let graph = weave.graph();
        for parent in &direct {
            let paths = graph.traverse(parent.id, g.max_depth, g.type_filter, g.min_strength, particles)?;
            for path in paths {
                let mut relevance = parent.relevance;
                let mut tip = parent.id;
                for sid in &path {
                    let s = graph.get(*sid).ok_or(Error::StrandNotFound(sid.0))?;
                    relevance *= s.strength;
                    tip = s.dst;
                }
                if !particles.contains_key(&tip) {
                    continue;
                }
                let better = best.get(&tip).is_none_or(|cur| relevance > cur.relevance);
                if better {
                    best.insert(tip, RecallHit { id: tip, relevance, provenance_path: Some(path) });
                }
            }
        }
    }

    let mut hits: Vec<RecallHit> = best
        .into_values()
        .filter(|h| particles.get(&h.id).is_some_and(|p| importance(p) >= spec.min_importance))
        .collect();
    hits.sort_by(relevance_order);
    Ok(RecallResult { hits, snapshot_seq: weave.seq(), latency_ms: 0.0 })
}

/// Top-k by cosine among the particles passing `keep`. Small candidate sets
/// are scanned exactly even when ANN is requested.
fn knn_stage(
    weave: &Weave,
    spec: &QuerySpec,
    q: &[f64],
    keep: &impl Fn(&InsightParticle) -> bool,
) -> Result<Vec<KnnHit>> {
    let particles = weave.particles();
    let index = weave.vectors();
    let filtered = spec.time_window.is_some() || spec.user_tag.is_some();
    let accept = |id: ParticleId| particles.get(&id).is_some_and(keep);
    if !spec.use_ann {
        return index.knn_exact_filtered(q, spec.k, accept);
    }
    if let Some(w) = spec.time_window {
        let threshold = weave.config().query.exact_scan_threshold;
        let in_window: Vec<ParticleId> = weave.temporal().range_iter(w.field, w.lo, w.hi)?.take(threshold + 1).collect();
        if in_window.len() <= threshold {
            let candidates: Vec<ParticleId> =
                in_window.into_iter().filter(|id| particles.get(id).is_some_and(keep)).collect();
            return index.knn_exact_among(q, spec.k, &candidates);
        }
    }
    let params = weave.config().ann;
    if filtered {
        index.knn_ann_filtered(q, spec.k, &params, accept)
    } else {
        index.knn_ann(q, spec.k, &params)
    }
}
