//! Semantic oracle port: turns raw text into particle fields, synthesizes
//! aggregates, and suggests strands. [`MockOracle`] is the deterministic
//! reference implementation; remote backends live in the `weave` crate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, DeterministicEmbedder, Embedder};
use crate::id::ParticleId;
use crate::model::{Signifier, SituationalImprint, StrandType};
use crate::text::{char_len, is_imperative, is_stopword, normalize_whitespace, tokenize, truncate_chars};
use crate::{Error, Millis, Result};

pub const MAX_KEYS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTransformOutput {
    /// Ranked, duplicate-free.
    pub resonance_keys: Vec<String>,
    pub signifiers: BTreeSet<Signifier>,
    pub imprint_enrichment: BTreeMap<String, String>,
    pub core_data: String,
}

impl OracleTransformOutput {
    pub fn check(&self, max_core_chars: usize) -> Result<()> {
        if self.resonance_keys.is_empty() || self.resonance_keys.iter().any(String::is_empty) {
            return Err(Error::Oracle("transform returned no resonance keys".into()));
        }
        let unique: BTreeSet<&String> = self.resonance_keys.iter().collect();
        if unique.len() != self.resonance_keys.len() {
            return Err(Error::Oracle("transform returned duplicate resonance keys".into()));
        }
        if self.core_data.is_empty() {
            return Err(Error::Oracle("transform returned empty core_data".into()));
        }
        if char_len(&self.core_data) > max_core_chars {
            return Err(Error::Oracle("transform core_data exceeds the configured maximum".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalSummary {
    pub t_create: Millis,
    pub t_event_start: Option<Millis>,
    pub t_event_end: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constituent {
    pub id: ParticleId,
    pub core_data: String,
    pub resonance_keys: BTreeSet<String>,
    pub temporal: TemporalSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub constituents: Vec<Constituent>,
    #[serde(default)]
    pub prompt_params: BTreeMap<String, String>,
}

impl SynthesisRequest {
    pub fn check(&self, min_cluster_size: usize) -> Result<()> {
        if self.constituents.len() < min_cluster_size {
            return Err(Error::TooFewConstituents { need: min_cluster_size, got: self.constituents.len() });
        }
        Ok(())
    }

    pub fn total_chars(&self) -> usize {
        self.constituents.iter().map(|c| char_len(&c.core_data)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub ia_core_data: String,
    pub ia_resonance_keys: Vec<String>,
    pub confidence: f64,
}

impl SynthesisResult {
    pub fn check(&self, req: &SynthesisRequest) -> Result<()> {
        if self.ia_core_data.is_empty() {
            return Err(Error::Oracle("synthesis returned empty core data".into()));
        }
        if char_len(&self.ia_core_data) >= req.total_chars() {
            return Err(Error::Oracle("synthesis is not shorter than its constituents".into()));
        }
        if !(self.confidence.is_finite() && (0.0..=1.0).contains(&self.confidence)) {
            return Err(Error::Oracle("synthesis confidence outside [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSuggestion {
    #[serde(rename = "type")]
    pub strand_type: StrandType,
    pub confidence: f64,
    pub rationale: String,
}

impl RelationSuggestion {
    pub fn check(&self) -> Result<()> {
        if self.strand_type == StrandType::DerivedFrom {
            return Err(Error::Oracle("oracle may not suggest derivedFrom".into()));
        }
        if !(self.confidence.is_finite() && (0.0..=1.0).contains(&self.confidence)) {
            return Err(Error::Oracle("suggestion confidence outside [0,1]".into()));
        }
        Ok(())
    }
}

/// What the oracle sees of a particle when asked for a relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticleView {
    pub id: ParticleId,
    pub core_data: String,
    pub resonance_keys: BTreeSet<String>,
}

pub trait SemanticOracle: Send + Sync {
    fn transform(&self, raw: &str, imprint: &SituationalImprint) -> Result<OracleTransformOutput>;

    fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisResult>;

    fn suggest_relation(&self, a: &ParticleView, b: &ParticleView) -> Result<Option<RelationSuggestion>>;
}

/// Ranks tokens by frequency (stopwords excluded), ties lexicographic, top 8.
/// Falls back to ranking every token when the text is all stopwords.
pub fn rank_keys(tokens: &[String]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tokens.iter().filter(|t| !is_stopword(t)) {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    if counts.is_empty() {
        for t in tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    top_by_count(counts)
}

fn top_by_count<K: AsRef<str> + Ord>(counts: BTreeMap<K, usize>) -> Vec<String> {
    let mut ranked: Vec<(K, usize)> = counts.into_iter().collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps that for ties.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.into_iter().take(MAX_KEYS).map(|(k, _)| String::from(k.as_ref())).collect()
}

/// Deterministic oracle whose behaviour is fully specified, so ingestion and
/// refinement are reproducible end to end.
#[derive(Debug, Clone)]
pub struct MockOracle {
    embedder: DeterministicEmbedder,
    max_core_chars: usize,
    min_cluster_size: usize,
}

pub const MOCK_ORACLE_TAG: &str = "mock-v1";

impl MockOracle {
    pub fn new(dimension: usize, max_core_chars: usize, min_cluster_size: usize) -> Self {
        Self { embedder: DeterministicEmbedder::new(dimension), max_core_chars, min_cluster_size }
    }

    fn sim(&self, a: &str, b: &str) -> Result<f64> {
        let va = self.embedder.embed(a)?;
        let vb = self.embedder.embed(b)?;
        cosine(&va, &vb)
    }
}

impl Default for MockOracle {
    fn default() -> Self {
        Self::new(crate::embed::DEFAULT_DIMENSION, 4096, 3)
    }
}

impl SemanticOracle for MockOracle {
    fn transform(&self, raw: &str, _imprint: &SituationalImprint) -> Result<OracleTransformOutput> {
        let normalized = normalize_whitespace(raw);
        if normalized.is_empty() {
            return Err(Error::EmptyInput);
        }
        let core_data = String::from(truncate_chars(&normalized, self.max_core_chars));
        let tokens = tokenize(&core_data);
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut signifiers = BTreeSet::new();
        if raw.contains('?') {
            signifiers.insert(Signifier::Query);
        }
        if is_imperative(&tokens[0]) {
            signifiers.insert(Signifier::Directive);
        }
        if signifiers.is_empty() {
            signifiers.insert(Signifier::Assertion);
        }
        let mut imprint_enrichment = BTreeMap::new();
        imprint_enrichment.insert("oracle".into(), MOCK_ORACLE_TAG.into());
        Ok(OracleTransformOutput { resonance_keys: rank_keys(&tokens), signifiers, imprint_enrichment, core_data })
    }

    fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisResult> {
        req.check(self.min_cluster_size.max(2))?;
        let mut members: Vec<&Constituent> = req.constituents.iter().collect();
        members.sort_by_key(|c| c.id);
        let vectors = members
            .iter()
            .map(|c| self.embedder.embed(&c.core_data))
            .collect::<Result<Vec<_>>>()?;
        let d = self.embedder.dimension();
        let mut centroid = alloc::vec![0.0; d];
        for v in &vectors {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / vectors.len() as f64;
            }
        }
        // first strictly-better wins, so ties go to the smallest id
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (i, v) in vectors.iter().enumerate() {
            let s = cosine(v, &centroid).unwrap_or(f64::NEG_INFINITY);
            if s > best_sim {
                best = i;
                best_sim = s;
            }
        }
        let n = members.len();
        let mut text = format!("Synthesis of {n} insights: {}", members[best].core_data);
        let budget = req.total_chars();
        if char_len(&text) >= budget {
            text = String::from(truncate_chars(&text, budget - 1));
        }

        let mut key_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &members {
            for k in &c.resonance_keys {
                *key_counts.entry(k.as_str()).or_default() += 1;
            }
        }
        let keys = top_by_count(key_counts);

        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                total += cosine(&vectors[i], &vectors[j])?;
                pairs += 1;
            }
        }
        let confidence = (total / pairs as f64).clamp(0.0, 1.0);
        Ok(SynthesisResult { ia_core_data: text, ia_resonance_keys: keys, confidence })
    }

    fn suggest_relation(&self, a: &ParticleView, b: &ParticleView) -> Result<Option<RelationSuggestion>> {
        if a.id == b.id {
            return Err(Error::SelfLoop);
        }
        let sim = self.sim(&a.core_data, &b.core_data)?;
        if sim >= 0.8 {
            return Ok(Some(RelationSuggestion {
                strand_type: StrandType::Elaborates,
                confidence: sim,
                rationale: format!("embedding cosine {sim:.4}"),
            }));
        }
        let overlap = a.resonance_keys.intersection(&b.resonance_keys).count();
        if overlap >= 3 {
            return Ok(Some(RelationSuggestion {
                strand_type: StrandType::RelatedTo,
                confidence: (overlap as f64 / MAX_KEYS as f64).min(1.0),
                rationale: format!("{overlap} shared resonance keys"),
            }));
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::id::new_particle_id;
    use alloc::string::ToString;
    use alloc::vec;

    fn imprint() -> SituationalImprint {
        SituationalImprint::from_source("test")
    }

    fn constituent(i: u64, text: &str, keys: &[&str]) -> Constituent {
        Constituent {
            id: new_particle_id(i, i),
            core_data: text.into(),
            resonance_keys: keys.iter().map(|k| k.to_string()).collect(),
            temporal: TemporalSummary { t_create: i as i64, t_event_start: None, t_event_end: None },
        }
    }

    #[test]
    fn question_mark_gives_query() {
        let out = MockOracle::default().transform("Is the cache warm?", &imprint()).unwrap();
        assert!(out.signifiers.contains(&Signifier::Query));
        assert!(!out.signifiers.contains(&Signifier::Assertion));
    }

    #[test]
    fn imperative_gives_directive() {
        let out = MockOracle::default().transform("check the index build", &imprint()).unwrap();
        assert_eq!(out.signifiers, [Signifier::Directive].into_iter().collect());
        let plain = MockOracle::default().transform("the index was built", &imprint()).unwrap();
        assert_eq!(plain.signifiers, [Signifier::Assertion].into_iter().collect());
    }

    #[test]
    fn key_ranking_by_frequency_without_stopwords() {
        let out = MockOracle::default().transform("the the index index index build", &imprint()).unwrap();
        assert_eq!(out.resonance_keys, ["index", "build"]);
        assert_eq!(out.imprint_enrichment.get("oracle").map(String::as_str), Some("mock-v1"));
    }

    #[test]
    fn key_ranking_caps_at_eight_and_breaks_ties_lexicographically() {
        let out = MockOracle::default()
            .transform("kilo juliet india hotel golf foxtrot echo delta charlie bravo alpha", &imprint())
            .unwrap();
        assert_eq!(out.resonance_keys, ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]);
    }

    #[test]
    fn all_stopword_text_still_gets_keys() {
        let out = MockOracle::default().transform("to be or not to be", &imprint()).unwrap();
        assert_eq!(out.resonance_keys, ["be", "to", "not", "or"]);
    }

    #[test]
    fn whitespace_normalized_and_truncated() {
        let oracle = MockOracle::new(16, 10, 3);
        let out = oracle.transform("  alpha \n\t beta   gamma delta ", &imprint()).unwrap();
        assert_eq!(out.core_data, "alpha beta");
        assert!(out.check(10).is_ok());
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(MockOracle::default().transform("   ", &imprint()), Err(Error::EmptyInput));
        assert_eq!(MockOracle::default().transform("?!", &imprint()), Err(Error::EmptyInput));
    }

    #[test]
    fn degenerate_cluster_synthesis() {
        let text = "deploy pipeline failed on the staging cluster";
        let req = SynthesisRequest {
            constituents: vec![
                constituent(1, text, &["deploy"]),
                constituent(2, text, &["deploy"]),
                constituent(3, text, &["deploy"]),
            ],
            prompt_params: BTreeMap::new(),
        };
        let out = MockOracle::default().synthesize(&req).unwrap();
        assert_eq!(out.ia_core_data, format!("Synthesis of 3 insights: {text}"));
        assert_eq!(out.confidence, 1.0);
        assert!(out.check(&req).is_ok());
    }

    #[test]
    fn synthesis_key_ties_are_lexicographic() {
        let req = SynthesisRequest {
            constituents: vec![
                constituent(1, "one long sentence here", &["zeta", "beta"]),
                constituent(2, "two long sentence here", &["alpha", "omega"]),
                constituent(3, "three long sentence here", &["gamma", "delta"]),
            ],
            prompt_params: BTreeMap::new(),
        };
        let out = MockOracle::default().synthesize(&req).unwrap();
        assert_eq!(out.ia_resonance_keys, ["alpha", "beta", "delta", "gamma", "omega", "zeta"]);
    }

    #[test]
    fn synthesis_picks_centroid_nearest() {
        // Brute-force oracle: embed, average, compare every member against the centroid.
        let texts = ["red apple pie with a cinnamon crust", "red apple tart with cream", "green pear sorbet served cold"];
        let req = SynthesisRequest {
            constituents: texts.iter().enumerate().map(|(i, t)| constituent(i as u64, t, &["x"])).collect(),
            prompt_params: BTreeMap::new(),
        };
        let e = DeterministicEmbedder::new(64);
        let vs: Vec<Vec<f64>> = texts.iter().map(|t| e.embed(t).unwrap()).collect();
        let centroid: Vec<f64> = (0..64).map(|d| vs.iter().map(|v| v[d]).sum::<f64>() / 3.0).collect();
        let sims: Vec<f64> = vs.iter().map(|v| cosine(v, &centroid).unwrap()).collect();
        let best = (0..3).fold(0, |b, i| if sims[i] > sims[b] { i } else { b });
        let out = MockOracle::default().synthesize(&req).unwrap();
        assert_eq!(out.ia_core_data, format!("Synthesis of 3 insights: {}", texts[best]));
    }

    #[test]
    fn synthesis_stays_shorter_than_inputs() {
        let req = SynthesisRequest {
            constituents: vec![constituent(1, "a", &["a"]), constituent(2, "b", &["b"]), constituent(3, "c", &["c"])],
            prompt_params: BTreeMap::new(),
        };
        let out = MockOracle::default().synthesize(&req).unwrap();
        assert!(char_len(&out.ia_core_data) < 3);
        assert!(out.check(&req).is_ok());
    }

    #[test]
    fn too_few_constituents() {
        let req = SynthesisRequest {
            constituents: vec![constituent(1, "a b", &["a"]), constituent(2, "c d", &["c"])],
            prompt_params: BTreeMap::new(),
        };
        assert_eq!(MockOracle::default().synthesize(&req), Err(Error::TooFewConstituents { need: 3, got: 2 }));
    }

    fn view(i: u64, text: &str, keys: &[&str]) -> ParticleView {
        ParticleView {
            id: new_particle_id(i, i),
            core_data: text.into(),
            resonance_keys: keys.iter().map(|k| k.to_string()).collect(),
        }
    }

    #[test]
    fn identical_texts_elaborate() {
        let s = MockOracle::default()
            .suggest_relation(&view(1, "same words here", &["a"]), &view(2, "same words here", &["a"]))
            .unwrap()
            .unwrap();
        assert_eq!(s.strand_type, StrandType::Elaborates);
        assert_eq!(s.confidence, 1.0);
    }

    #[test]
    fn unrelated_texts_get_nothing() {
        let a = view(1, "quantum chromodynamics lattice", &["quantum", "lattice"]);
        let b = view(2, "sourdough starter hydration", &["sourdough", "starter"]);
        let e = DeterministicEmbedder::new(64);
        assert!(cosine(&e.embed(&a.core_data).unwrap(), &e.embed(&b.core_data).unwrap()).unwrap() < 0.8);
        assert!(a.resonance_keys.intersection(&b.resonance_keys).count() < 3);
        assert_eq!(MockOracle::default().suggest_relation(&a, &b).unwrap(), None);
    }

    #[test]
    fn key_overlap_gives_related_to() {
        let a = view(1, "alpha beta gamma delta one two three four five", &["alpha", "beta", "gamma", "delta"]);
        let b = view(2, "alpha beta gamma six seven eight nine ten eleven", &["alpha", "beta", "gamma", "six"]);
        let s = MockOracle::default().suggest_relation(&a, &b).unwrap().unwrap();
        assert_eq!(s.strand_type, StrandType::RelatedTo);
        assert_eq!(s.confidence, 3.0 / 8.0);
    }
}
