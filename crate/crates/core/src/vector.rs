//! Vectorial layer: unit embeddings with exact and approximate k-NN under
//! cosine similarity.
//!
//! The approximate side is a hierarchical navigable small-world graph with
//! greedy beam search. Results of both searches are ordered by score
//! descending, ties broken by ascending particle id.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};

use crate::embed::{dot, normalize};
use crate::id::ParticleId;
use crate::text::SplitMix64;
use crate::{Error, Result};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnParams {
    pub max_neighbors_per_node: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self { max_neighbors_per_node: 16, ef_construction: 100, ef_search: 64 }
    }
}

impl AnnParams {
    pub fn check(&self) -> Result<()> {
        if self.max_neighbors_per_node < 2 || self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::Config("ANN parameters must be positive (and M >= 2)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnHit {
    pub id: ParticleId,
    pub score: f64,
}

/// Descending score, then ascending id.
pub fn hit_order(a: &KnnHit, b: &KnnHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub id: ParticleId,
    pub vector: Vec<f64>,
    pub embedder_tag: String,
}

/// |exact ∩ approx| / |exact|.
pub fn recall_at_k(exact: &[KnnHit], approx: &[KnnHit]) -> f64 {
    if exact.is_empty() {
        return 0.0;
    }
    let shared = exact.iter().filter(|e| approx.iter().any(|a| a.id == e.id)).count();
    shared as f64 / exact.len() as f64
}

/// Heap entry ranked by "goodness": higher score, then lower id.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    id: ParticleId,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.id.cmp(&self.id))
    }
}

/// Keeps the best `k` of a stream of hits.
struct TopK {
    k: usize,
    heap: BinaryHeap<Reverse<Ranked>>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    fn push(&mut self, id: ParticleId, score: f64) {
        let item = Ranked { score, id };
        if self.heap.len() < self.k {
            self.heap.push(Reverse(item));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if item > *worst {
                self.heap.pop();
                self.heap.push(Reverse(item));
            }
        }
    }

    fn into_sorted(self) -> Vec<KnnHit> {
        let mut hits: Vec<KnnHit> = self
            .heap
            .into_iter()
            .map(|Reverse(r)| KnnHit { id: r.id, score: r.score })
            .collect();
        hits.sort_by(hit_order);
        hits
    }
}

/// Search-time candidate: similarity to the query plus graph slot.
#[derive(Debug, Clone, Copy)]
struct Cand {
    sim: f64,
    slot: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.slot.cmp(&self.slot))
    }
}

#[derive(Debug, Clone)]
struct Node {
    id: ParticleId,
    live: bool,
    links: Vec<Vec<u32>>,
}

impl Node {
    fn level(&self) -> usize {
        self.links.len() - 1
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self { bits: vec![0; n / 64 + 1] }
    }

    /// Returns true if `slot` was not yet visited.
    fn insert(&mut self, slot: u32) -> bool {
        let (w, b) = ((slot / 64) as usize, slot % 64);
        let was = self.bits[w] & (1 << b) != 0;
        self.bits[w] |= 1 << b;
        !was
    }
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    dimension: usize,
    embedder_tag: String,
    params: AnnParams,
    level_norm: f64,
    slots: BTreeMap<ParticleId, u32>,
    nodes: Vec<Node>,
    vectors: Vec<f64>,
    free: Vec<u32>,
    entry: Option<u32>,
    max_level: usize,
}

impl VectorIndex {
    pub fn new(dimension: usize, embedder_tag: impl Into<String>, params: AnnParams) -> Self {
        let m = params.max_neighbors_per_node.max(2) as f64;
        Self {
            dimension,
            embedder_tag: embedder_tag.into(),
            params,
            level_norm: 1.0 / libm::log(m),
            slots: BTreeMap::new(),
            nodes: Vec::new(),
            vectors: Vec::new(),
            free: Vec::new(),
            entry: None,
            max_level: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embedder_tag(&self) -> &str {
        &self.embedder_tag
    }

    pub fn params(&self) -> AnnParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, id: ParticleId) -> bool {
        self.slots.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParticleId> + '_ {
        self.slots.keys().copied()
    }

    pub fn vector(&self, id: ParticleId) -> Option<&[f64]> {
        self.slots.get(&id).map(|&s| self.vec_at(s))
    }

    /// Every stored embedding in id order.
    pub fn iter(&self) -> impl Iterator<Item = (ParticleId, &[f64])> + '_ {
        self.slots.iter().map(move |(&id, &s)| (id, self.vec_at(s)))
    }

    fn vec_at(&self, slot: u32) -> &[f64] {
        let d = self.dimension;
        let start = slot as usize * d;
        &self.vectors[start..start + d]
    }

    fn sim(&self, q: &[f64], slot: u32) -> f64 {
        dot(q, self.vec_at(slot))
    }

    fn prepare(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, got: v.len() });
        }
        let mut q = v.to_vec();
        normalize(&mut q)?;
        Ok(q)
    }

    pub fn insert_embedding(&mut self, e: &Embedding) -> Result<()> {
        if e.embedder_tag != self.embedder_tag {
            return Err(Error::EmbedderMismatch {
                expected: self.embedder_tag.clone(),
                got: e.embedder_tag.clone(),
            });
        }
        self.insert(e.id, &e.vector)
    }

    /// Adds `vector` (normalized on the way in) under `id`.
    pub fn insert(&mut self, id: ParticleId, vector: &[f64]) -> Result<()> {
        if self.slots.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let v = self.prepare(vector)?;
        let level = self.draw_level(id);
        let slot = match self.free.pop() {
            Some(s) => {
                let d = self.dimension;
                self.vectors[s as usize * d..(s as usize + 1) * d].copy_from_slice(&v);
                self.nodes[s as usize] = Node { id, live: true, links: vec![Vec::new(); level + 1] };
                s
            }
            None => {
                self.vectors.extend_from_slice(&v);
                self.nodes.push(Node { id, live: true, links: vec![Vec::new(); level + 1] });
                (self.nodes.len() - 1) as u32
            }
        };
        self.slots.insert(id, slot);
        self.link(slot, level);
        Ok(())
    }

    fn draw_level(&self, id: ParticleId) -> usize {
        let raw = id.as_u128();
        let mut rng = SplitMix64::new((raw as u64) ^ ((raw >> 64) as u64).rotate_left(17));
        let u = 1.0 - rng.next_f64(); // (0, 1]
        let level = libm::floor(-libm::log(u) * self.level_norm);
        (level as usize).min(MAX_LEVEL)
    }

    fn cap(&self, layer: usize) -> usize {
        let m = self.params.max_neighbors_per_node;
        if layer == 0 {
            2 * m
        } else {
            m
        }
    }

    fn link(&mut self, slot: u32, level: usize) {
        let Some(entry) = self.entry else {
            self.entry = Some(slot);
            self.max_level = level;
            return;
        };
        let q: Vec<f64> = self.vec_at(slot).to_vec();
        let mut ep = Cand { sim: self.sim(&q, entry), slot: entry };
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.greedy(&q, ep, layer);
        }
        let mut entry_points = vec![ep];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found =
                self.search_layer(&q, &entry_points, self.params.ef_construction, layer, None::<&dyn Fn(u32) -> bool>);
            let chosen = self.select(&found, self.cap(layer));
            self.nodes[slot as usize].links[layer] = chosen.iter().map(|c| c.slot).collect();
            for c in &chosen {
                self.connect(c.slot, slot, layer);
            }
            entry_points = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(slot);
        }
    }

    /// Adds `to` to `from`'s list at `layer`, re-selecting if over capacity.
    fn connect(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.cap(layer);
        let links = &mut self.nodes[from as usize].links[layer];
        if links.contains(&to) {
            return;
        }
        links.push(to);
        if links.len() > cap {
            let base: Vec<f64> = self.vec_at(from).to_vec();
            let mut cands: Vec<Cand> = self.nodes[from as usize].links[layer]
                .iter()
                .map(|&s| Cand { sim: self.sim(&base, s), slot: s })
                .collect();
            cands.sort_by(|a, b| b.cmp(a));
            let kept = self.select(&cands, cap);
            self.nodes[from as usize].links[layer] = kept.iter().map(|c| c.slot).collect();
        }
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every neighbour already kept; backfill with the discarded ones.
    /// `cands` must be sorted best-first.
    fn select(&self, cands: &[Cand], m: usize) -> Vec<Cand> {
        let mut kept: Vec<Cand> = Vec::with_capacity(m);
        let mut discarded = Vec::new();
        for &c in cands {
            if kept.len() >= m {
                break;
            }
            let v = self.vec_at(c.slot);
            let diverse = kept.iter().all(|k| dot(v, self.vec_at(k.slot)) < c.sim);
            if diverse {
                kept.push(c);
            } else {
                discarded.push(c);
            }
        }
        for c in discarded {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy(&self, q: &[f64], mut best: Cand, layer: usize) -> Cand {
        loop {
            let mut improved = false;
            for &n in &self.nodes[best.slot as usize].links[layer] {
                let s = self.sim(q, n);
                if s > best.sim {
                    best = Cand { sim: s, slot: n };
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search on one layer. Returns up to `ef` candidates, best first.
    /// With a filter, rejected nodes are still traversed but never returned.
    fn search_layer<F: Fn(u32) -> bool + ?Sized>(
        &self,
        q: &[f64],
        entry_points: &[Cand],
        ef: usize,
        layer: usize,
        filter: Option<&F>,
    ) -> Vec<Cand> {
        let mut visited = Visited::new(self.nodes.len());
        let mut frontier: BinaryHeap<Cand> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        let accept = |slot: u32| filter.is_none_or(|f| f(slot));
        for &ep in entry_points {
            if visited.insert(ep.slot) {
                frontier.push(ep);
                if accept(ep.slot) {
                    results.push(Reverse(ep));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        while let Some(c) = frontier.pop() {
            if results.len() >= ef {
                if let Some(Reverse(worst)) = results.peek() {
                    if c.sim < worst.sim {
                        break;
                    }
                }
            }
            for &n in &self.nodes[c.slot as usize].links[layer] {
                if !visited.insert(n) {
                    continue;
                }
                let s = self.sim(q, n);
                let full = results.len() >= ef;
                let worst = results.peek().map(|Reverse(w)| w.sim).unwrap_or(f64::NEG_INFINITY);
                if !full || s > worst {
                    let cand = Cand { sim: s, slot: n };
                    frontier.push(cand);
                    if accept(n) {
                        results.push(Reverse(cand));
                        if results.len() > ef {
                            results.pop();
                        }
                    }
                }
            }
        }
        let mut out: Vec<Cand> = results.into_iter().map(|Reverse(c)| c).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    pub fn remove(&mut self, id: ParticleId) -> Result<()> {
        let slot = self.slots.remove(&id).ok_or(Error::NotFound(id))?;
        let removed = core::mem::take(&mut self.nodes[slot as usize].links);
        self.nodes[slot as usize].live = false;
        for (layer, orphan_links) in removed.iter().enumerate() {
            let cap = self.cap(layer);
            let affected: Vec<u32> = (0..self.nodes.len() as u32)
                .filter(|&s| {
                    let n = &self.nodes[s as usize];
                    n.live && n.links.len() > layer && n.links[layer].contains(&slot)
                })
                .collect();
            for a in affected {
                let base: Vec<f64> = self.vec_at(a).to_vec();
                let mut pool: Vec<u32> = self.nodes[a as usize].links[layer]
                    .iter()
                    .copied()
                    .filter(|&s| s != slot)
                    .collect();
                for &s in orphan_links {
                    if s != a && s != slot && !pool.contains(&s) {
                        pool.push(s);
                    }
                }
                let mut cands: Vec<Cand> =
                    pool.into_iter().map(|s| Cand { sim: self.sim(&base, s), slot: s }).collect();
                cands.sort_by(|x, y| y.cmp(x));
                let kept = self.select(&cands, cap);
                self.nodes[a as usize].links[layer] = kept.iter().map(|c| c.slot).collect();
            }
        }
        self.free.push(slot);
        if self.entry == Some(slot) {
            self.entry = None;
            self.max_level = 0;
            for (s, n) in self.nodes.iter().enumerate() {
                if n.live && (self.entry.is_none() || n.level() > self.max_level) {
                    self.entry = Some(s as u32);
                    self.max_level = n.level();
                }
            }
        }
        Ok(())
    }

    /// Exact top-k by exhaustive scan.
    pub fn knn_exact(&self, q: &[f64], k: usize) -> Result<Vec<KnnHit>> {
        self.knn_exact_filtered(q, k, |_| true)
    }

    pub fn knn_exact_filtered(
        &self,
        q: &[f64],
        k: usize,
        keep: impl Fn(ParticleId) -> bool,
    ) -> Result<Vec<KnnHit>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let q = self.prepare(q)?;
        let mut top = TopK::new(k);
        for (&id, &slot) in &self.slots {
            if keep(id) {
                top.push(id, self.sim(&q, slot).clamp(-1.0, 1.0));
            }
        }
        Ok(top.into_sorted())
    }

    /// Exact top-k over an explicit candidate list (unknown ids are skipped).
    pub fn knn_exact_among(&self, q: &[f64], k: usize, candidates: &[ParticleId]) -> Result<Vec<KnnHit>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let q = self.prepare(q)?;
        let mut top = TopK::new(k);
        for id in candidates {
            if let Some(&slot) = self.slots.get(id) {
                top.push(*id, self.sim(&q, slot).clamp(-1.0, 1.0));
            }
        }
        Ok(top.into_sorted())
    }

    /// Approximate top-k. Graph shape is fixed at construction; only
    /// `params.ef_search` is read here.
    pub fn knn_ann(&self, q: &[f64], k: usize, params: &AnnParams) -> Result<Vec<KnnHit>> {
        self.ann(q, k, params.ef_search, None::<&dyn Fn(u32) -> bool>)
    }

    /// Approximate top-k restricted to ids accepted by `keep`.
    pub fn knn_ann_filtered(
        &self,
        q: &[f64],
        k: usize,
        params: &AnnParams,
        keep: impl Fn(ParticleId) -> bool,
    ) -> Result<Vec<KnnHit>> {
        let f = |slot: u32| keep(self.nodes[slot as usize].id);
        self.ann(q, k, params.ef_search, Some(&f))
    }

    fn ann<F: Fn(u32) -> bool + ?Sized>(
        &self,
        q: &[f64],
        k: usize,
        ef_search: usize,
        filter: Option<&F>,
    ) -> Result<Vec<KnnHit>> {
        let entry = self.entry.ok_or(Error::EmptyIndex)?;
        let q = self.prepare(q)?;
        let mut ep = Cand { sim: self.sim(&q, entry), slot: entry };
        for layer in (1..=self.max_level).rev() {
            ep = self.greedy(&q, ep, layer);
        }
        let found = self.search_layer(&q, &[ep], ef_search.max(k), 0, filter);
        let mut hits: Vec<KnnHit> = found
            .into_iter()
            .map(|c| KnnHit { id: self.nodes[c.slot as usize].id, score: c.sim.clamp(-1.0, 1.0) })
            .collect();
        hits.sort_by(hit_order);
        hits.truncate(k);
        Ok(hits)
    }

    /// Sum of neighbour-list lengths on layer 0, for diagnostics.
    pub fn base_layer_edges(&self) -> usize {
        self.nodes.iter().filter(|n| n.live).map(|n| n.links[0].len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_deterministic;
    use crate::id::new_particle_id;
    use alloc::format;

    fn pid(i: u64) -> ParticleId {
        new_particle_id(1_000 + i, i)
    }

    fn index() -> VectorIndex {
        VectorIndex::new(2, "t", AnnParams::default())
    }

    #[test]
    fn self_query_scores_one() {
        let mut idx = index();
        idx.insert(pid(1), &[3.0, 4.0]).unwrap();
        let hits = idx.knn_exact(&[3.0, 4.0], 1).unwrap();
        assert_eq!(hits[0].id, pid(1));
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        let ann = idx.knn_ann(&[3.0, 4.0], 1, &AnnParams::default()).unwrap();
        assert_eq!(ann, hits);
    }

    #[test]
    fn remove_then_absent() {
        let mut idx = index();
        idx.insert(pid(1), &[1.0, 0.0]).unwrap();
        idx.insert(pid(2), &[0.0, 1.0]).unwrap();
        idx.remove(pid(1)).unwrap();
        let hits = idx.knn_exact(&[1.0, 0.0], 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].id, pid(2));
        let ann = idx.knn_ann(&[1.0, 0.0], 5, &AnnParams::default()).unwrap();
        assert_eq!(ann.len(), 1);
        assert_eq!(idx.remove(pid(1)), Err(Error::NotFound(pid(1))));
    }

    #[test]
    fn duplicate_and_errors() {
        let mut idx = index();
        idx.insert(pid(1), &[1.0, 0.0]).unwrap();
        assert_eq!(idx.insert(pid(1), &[0.0, 1.0]), Err(Error::DuplicateId(pid(1))));
        assert_eq!(idx.insert(pid(2), &[0.0, 0.0]), Err(Error::ZeroVector));
        assert!(matches!(idx.insert(pid(3), &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert_eq!(index().knn_exact(&[1.0, 0.0], 1), Err(Error::EmptyIndex));
        assert_eq!(index().knn_ann(&[1.0, 0.0], 1, &AnnParams::default()), Err(Error::EmptyIndex));
    }

    #[test]
    fn embedder_tag_mismatch_rejected() {
        let mut idx = index();
        let e = Embedding { id: pid(1), vector: vec![1.0, 0.0], embedder_tag: "other".into() };
        assert!(matches!(idx.insert_embedding(&e), Err(Error::EmbedderMismatch { .. })));
    }

    #[test]
    fn five_vectors_match_brute_force() {
        let pts = [[1.0, 0.0], [0.8, 0.6], [0.0, 1.0], [-1.0, 0.2], [0.6, -0.8]];
        let mut idx = index();
        for (i, p) in pts.iter().enumerate() {
            idx.insert(pid(i as u64), p).unwrap();
        }
        let q = [0.9, 0.2];
        // brute force: every member's cosine, sorted
        let mut all: Vec<(f64, ParticleId)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let c = (q[0] * p[0] + q[1] * p[1])
                    / (libm::sqrt(q[0] * q[0] + q[1] * q[1]) * libm::sqrt(p[0] * p[0] + p[1] * p[1]));
                (c, pid(i as u64))
            })
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let hits = idx.knn_exact(&q, 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), [all[0].1, all[1].1]);
        assert_eq!(idx.knn_exact(&q, 10).unwrap().len(), 5);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let mut idx = index();
        idx.insert(pid(5), &[1.0, 1.0]).unwrap();
        idx.insert(pid(2), &[2.0, 2.0]).unwrap();
        idx.insert(pid(9), &[0.5, 0.5]).unwrap();
        let ids: Vec<_> = idx.knn_exact(&[1.0, 1.0], 3).unwrap().into_iter().map(|h| h.id).collect();
        let mut want = vec![pid(2), pid(5), pid(9)];
        want.sort();
        assert_eq!(ids, want);
    }

    #[test]
    fn recall_definition() {
        let h = |i| KnnHit { id: pid(i), score: 0.0 };
        let a: Vec<_> = (0..10).map(h).collect();
        assert_eq!(recall_at_k(&a, &a), 1.0);
        let b: Vec<_> = (10..20).map(h).collect();
        assert_eq!(recall_at_k(&a, &b), 0.0);
        let c: Vec<_> = (0..7).chain(20..23).map(h).collect();
        assert!((recall_at_k(&a, &c) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn wide_beam_is_exact_on_small_index() {
        let mut idx = VectorIndex::new(16, "t", AnnParams::default());
        for i in 0..90u64 {
            let v = embed_deterministic(&format!("tok{} tok{} common", i, i % 7), 16).unwrap();
            idx.insert(pid(i), &v).unwrap();
        }
        let wide = AnnParams { ef_search: idx.len(), ..AnnParams::default() };
        for i in 0..30u64 {
            let q = embed_deterministic(&format!("tok{} probe", i * 3), 16).unwrap();
            let exact = idx.knn_exact(&q, 10).unwrap();
            let approx = idx.knn_ann(&q, 10, &wide).unwrap();
            assert_eq!(exact, approx);
        }
    }

    #[test]
    fn removal_keeps_graph_searchable() {
        let mut idx = VectorIndex::new(16, "t", AnnParams::default());
        for i in 0..300u64 {
            let v = embed_deterministic(&format!("w{} w{} w{}", i, i % 13, i % 29), 16).unwrap();
            idx.insert(pid(i), &v).unwrap();
        }
        for i in (0..300u64).step_by(3) {
            idx.remove(pid(i)).unwrap();
        }
        assert_eq!(idx.len(), 200);
        let wide = AnnParams { ef_search: 400, ..AnnParams::default() };
        let q = embed_deterministic("w1 w5 w7", 16).unwrap();
        let exact = idx.knn_exact(&q, 10).unwrap();
        let approx = idx.knn_ann(&q, 10, &wide).unwrap();
        assert_eq!(exact, approx);
        // slot reuse after removal
        let v = embed_deterministic("fresh", 16).unwrap();
        idx.insert(pid(1000), &v).unwrap();
        assert_eq!(idx.knn_exact(&v, 1).unwrap()[0].id, pid(1000));
    }

    #[test]
    fn filtered_searches_respect_filter() {
        let mut idx = VectorIndex::new(8, "t", AnnParams::default());
        for i in 0..50u64 {
            let v = embed_deterministic(&format!("a{} b{}", i, i % 5), 8).unwrap();
            idx.insert(pid(i), &v).unwrap();
        }
        let q = embed_deterministic("a3 b3", 8).unwrap();
        let even = |id: ParticleId| (0..50u64).step_by(2).any(|i| pid(i) == id);
        let hits = idx.knn_exact_filtered(&q, 5, even).unwrap();
        assert!(hits.iter().all(|h| even(h.id)));
        let wide = AnnParams { ef_search: 100, ..AnnParams::default() };
        let ann = idx.knn_ann_filtered(&q, 5, &wide, even).unwrap();
        assert_eq!(ann, hits);
        let among: Vec<_> = (0..50u64).step_by(2).map(pid).collect();
        assert_eq!(idx.knn_exact_among(&q, 5, &among).unwrap(), hits);
    }
}
