//! Deterministic synthetic corpora for benchmarks and large-scale tests.
//!
//! Texts are bags of synthetic words drawn with Zipf-like frequencies; a
//! `cluster_fraction` of items are near-duplicates of an earlier item (about a
//! fifth of their tokens replaced), which seeds clusters for refinement and
//! gives graph expansion something to follow.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use weave_core::oracle::MockOracle;
use weave_core::text::{fnv1a64, is_stopword, SplitMix64};
use weave_core::{EngineConfig, Millis, ParticleId, SituationalImprint, StrandEvidence, StrandType, Weave};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub n_particles: usize,
    pub seed: u64,
    pub vocab_size: usize,
    pub tokens_min: usize,
    pub tokens_max: usize,
    /// Start of the creation-time range, epoch ms.
    pub start: Millis,
    /// Length of the creation-time range, ms.
    pub time_span: Millis,
    pub cluster_fraction: f64,
    pub user_tags: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            n_particles: 1_000,
            seed: 7,
            vocab_size: 500,
            tokens_min: 5,
            tokens_max: 30,
            start: 1_700_000_000_000,
            time_span: 30 * 86_400_000,
            cluster_fraction: 0.3,
            user_tags: 4,
        }
    }
}

impl WorkloadSpec {
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.n_particles == 0 {
            return Err("n_particles must be at least 1".into());
        }
        if self.vocab_size < 2 || self.tokens_min == 0 || self.tokens_min > self.tokens_max {
            return Err("need vocab_size >= 2 and 1 <= tokens_min <= tokens_max".into());
        }
        if !(0.0..=1.0).contains(&self.cluster_fraction) || self.time_span < 0 {
            return Err("cluster_fraction must lie in [0,1] and time_span must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadItem {
    pub text: String,
    pub t_create: Millis,
    #[serde(default)]
    pub user_tag: Option<String>,
    /// Index of the item this one was derived from, if a near-duplicate.
    #[serde(default)]
    pub dup_of: Option<usize>,
}

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "va", "ze", "bo", "di", "fu", "ga", "he", "ji", "ko", "lu", "ma",
    "ne",
];

/// The `i`-th vocabulary word: `i` written in base 20 with syllable digits,
/// at least two syllables long.
pub fn word(i: usize) -> String {
    let mut digits = Vec::new();
    let mut n = i;
    loop {
        digits.push(SYLLABLES[n % 20]);
        n /= 20;
        if n == 0 {
            break;
        }
    }
    if digits.len() < 2 {
        digits.push("qa");
    }
    digits.reverse();
    digits.concat()
}

pub fn vocabulary(size: usize) -> Vec<String> {
    (0..).map(word).filter(|w| !is_stopword(w)).take(size).collect()
}

/// Samples ranks with probability proportional to 1/(rank+1).
pub struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    pub fn new(n: usize) -> Self {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 0..n {
            acc += 1.0 / (r as f64 + 1.0);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Self { cdf }
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> usize {
        let u = rng.next_f64();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

fn below(rng: &mut SplitMix64, n: usize) -> usize {
    (rng.next_f64() * n as f64) as usize % n.max(1)
}

pub fn generate(spec: &WorkloadSpec) -> Vec<WorkloadItem> {
    let vocab = vocabulary(spec.vocab_size);
    let zipf = Zipf::new(vocab.len());
    let mut rng = SplitMix64::new(spec.seed);
    let mut token_lists: Vec<Vec<usize>> = Vec::with_capacity(spec.n_particles);
    let mut items = Vec::with_capacity(spec.n_particles);
    for i in 0..spec.n_particles {
        let dup = i > 0 && rng.next_f64() < spec.cluster_fraction;
        let (tokens, dup_of) = if dup {
            let src = below(&mut rng, i);
            let mut tokens = token_lists[src].clone();
            for t in tokens.iter_mut() {
                if rng.next_f64() < 0.2 {
                    *t = zipf.sample(&mut rng);
                }
            }
            (tokens, Some(src))
        } else {
            let len = spec.tokens_min + below(&mut rng, spec.tokens_max - spec.tokens_min + 1);
            ((0..len).map(|_| zipf.sample(&mut rng)).collect(), None)
        };
        let text = tokens.iter().map(|&t| vocab[t].as_str()).collect::<Vec<_>>().join(" ");
        let t_create = spec.start + (spec.time_span as i128 * i as i128 / spec.n_particles as i128) as Millis;
        let user_tag = (spec.user_tags > 0).then(|| format!("user-{}", below(&mut rng, spec.user_tags)));
        token_lists.push(tokens);
        items.push(WorkloadItem { text, t_create, user_tag, dup_of });
    }
    items
}

/// JSON Lines rendering; byte-identical for identical specs.
pub fn to_jsonl(items: &[WorkloadItem]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("workload items always serialize"));
        out.push('\n');
    }
    out
}

pub fn corpus_hash(items: &[WorkloadItem]) -> u64 {
    fnv1a64(to_jsonl(items).as_bytes())
}

/// Ingests `items` through the mock oracle into a fresh, unjournaled weave and
/// links every near-duplicate to its source with an `elaborates` strand.
pub fn build_weave(items: &[WorkloadItem], config: &EngineConfig) -> Result<(Weave, Vec<ParticleId>)> {
    let mut w = Weave::new(config.clone())?;
    w.set_journaling(false);
    let oracle = MockOracle::new(config.dimension, config.oracle.max_core_data_chars, config.cluster.min_cluster_size);
    let mut ids = Vec::with_capacity(items.len());
    for item in items {
        let mut imprint = SituationalImprint::from_source("workload");
        imprint.user_tag = item.user_tag.clone();
        ids.push(w.ingest(&item.text, imprint, item.t_create, &oracle)?);
    }
    for (i, item) in items.iter().enumerate() {
        if let Some(src) = item.dup_of {
            let sim = match (w.vectors().vector(ids[i]), w.vectors().vector(ids[src])) {
                (Some(a), Some(b)) => weave_core::embed::cosine(a, b)?,
                _ => 0.0,
            };
            let evidence = StrandEvidence { sim, cooccur: 0, conf_soi: 0.5, common_neighbors: 0 };
            w.add_strand(ids[i], ids[src], StrandType::Elaborates, evidence, item.t_create)?;
        }
    }
    Ok((w, ids))
}

/// Shares one built weave between callers that only read it.
pub fn build_shared(items: &[WorkloadItem], config: &EngineConfig) -> Result<(Arc<Weave>, Vec<ParticleId>)> {
    let (w, ids) = build_weave(items, config)?;
    Ok((Arc::new(w), ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_unique_and_not_stopwords() {
        let v = vocabulary(500);
        let set: std::collections::BTreeSet<&String> = v.iter().collect();
        assert_eq!(set.len(), 500);
        assert_eq!(word(0), "qaka");
        assert_eq!(word(21), "lolo");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = WorkloadSpec { n_particles: 200, ..WorkloadSpec::default() };
        assert_eq!(to_jsonl(&generate(&spec)), to_jsonl(&generate(&spec)));
        let other = WorkloadSpec { seed: 8, ..spec.clone() };
        assert_ne!(corpus_hash(&generate(&spec)), corpus_hash(&generate(&other)));
    }

    #[test]
    fn times_are_monotone_and_in_range() {
        let spec = WorkloadSpec { n_particles: 500, ..WorkloadSpec::default() };
        let items = generate(&spec);
        assert!(items.windows(2).all(|w| w[0].t_create <= w[1].t_create));
        assert!(items.iter().all(|i| i.t_create >= spec.start && i.t_create < spec.start + spec.time_span));
        let dups = items.iter().filter(|i| i.dup_of.is_some()).count();
        assert!(dups > 100 && dups < 200, "{dups}");
    }
}
