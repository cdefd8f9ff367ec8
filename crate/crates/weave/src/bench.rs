//! Query-latency sweep over store sizes, with a log-log fit of mean latency
//! against size.
//!
//! Every size gets its own generated corpus and weave. Queries are a fixed
//! mix: half text-only, a quarter temporal-only, a quarter hybrid (text plus
//! time window plus depth-1 graph expansion). Time windows are sized to cover
//! a fixed expected number of particles, so the sweep measures how the
//! indexes scale rather than how result sets grow.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use weave_core::query::{GraphExpand, QuerySpec, TimeWindow};
use weave_core::temporal::TemporalField;
use weave_core::text::SplitMix64;
use weave_core::{EngineConfig, Weave};

use crate::workload::{build_weave, corpus_hash, generate, vocabulary, WorkloadSpec, Zipf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub sizes: Vec<usize>,
    pub queries_per_size: usize,
    pub workload: WorkloadSpec,
    pub seed: u64,
    pub k: usize,
    /// Expected particles inside a temporal-only window.
    pub window_items: usize,
    /// Expected particles inside a hybrid query's window.
    pub hybrid_window_items: usize,
    pub use_ann: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            sizes: vec![1_000, 10_000, 100_000],
            queries_per_size: 200,
            workload: WorkloadSpec::default(),
            seed: 11,
            k: 10,
            window_items: 100,
            hybrid_window_items: 1_000,
            use_ann: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub store_size: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub text_mean_ms: f64,
    pub temporal_mean_ms: f64,
    pub hybrid_mean_ms: f64,
    pub build_ms: f64,
    pub corpus_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeFailure {
    pub store_size: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub rows: Vec<LatencyRow>,
    /// Slope of ln(mean latency) against ln(store size); absent with fewer than two rows.
    pub fitted_exponent: Option<f64>,
    #[serde(default)]
    pub failures: Vec<SizeFailure>,
}

impl LatencyReport {
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Text,
    Temporal,
    Hybrid,
}

/// Kind of the `i`-th query in the fixed 2:1:1 mix.
pub fn query_kind(i: usize) -> QueryKind {
    match i % 4 {
        0 | 1 => QueryKind::Text,
        2 => QueryKind::Temporal,
        _ => QueryKind::Hybrid,
    }
}

/// Least-squares slope of ln(y) on ln(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// The deterministic query mix for one store.
pub fn query_mix(opts: &BenchOptions, spec: &WorkloadSpec, seed: u64) -> Vec<QuerySpec> {
    let vocab = vocabulary(spec.vocab_size);
    let zipf = Zipf::new(vocab.len());
    let mut rng = SplitMix64::new(seed);
    let n = spec.n_particles.max(1) as i128;
    let window = |rng: &mut SplitMix64, items: usize| {
        let width = ((spec.time_span as i128 * items as i128) / n).max(1) as i64;
        let lo = spec.start + (rng.next_f64() * (spec.time_span - width).max(0) as f64) as i64;
        TimeWindow { field: TemporalField::TCreate, lo, hi: lo + width }
    };
    (0..opts.queries_per_size)
        .map(|i| {
            let len = 3 + (rng.next_f64() * 6.0) as usize;
            let text: Vec<&str> = (0..len).map(|_| vocab[zipf.sample(&mut rng)].as_str()).collect();
            let text = text.join(" ");
            let mut q = QuerySpec { k: opts.k, use_ann: opts.use_ann, ..QuerySpec::default() };
            match query_kind(i) {
                QueryKind::Text => q.text = Some(text),
                QueryKind::Temporal => q.time_window = Some(window(&mut rng, opts.window_items)),
                QueryKind::Hybrid => {
                    q.text = Some(text);
                    q.time_window = Some(window(&mut rng, opts.hybrid_window_items));
                    q.graph_expand = Some(GraphExpand { max_depth: 1, type_filter: None, min_strength: 0.0 });
                }
            }
            q
        })
        .collect()
}

/// Times `queries` against `weave`, touching hits as the engine would.
/// Returns per-query latencies in ms.
pub fn run_queries(weave: &mut Weave, queries: &[QuerySpec], now: i64) -> weave_core::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let started = Instant::now();
        weave.recall(q, now)?;
        out.push(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn measure_size(opts: &BenchOptions, config: &EngineConfig, size: usize) -> Result<LatencyRow, String> {
    let spec = WorkloadSpec { n_particles: size, ..opts.workload.clone() };
    spec.check()?;
    let items = generate(&spec);
    let hash = corpus_hash(&items);
    let started = Instant::now();
    let (mut weave, _) = build_weave(&items, config).map_err(|e| e.to_string())?;
    let build_ms = started.elapsed().as_secs_f64() * 1e3;
    drop(items);
    let queries = query_mix(opts, &spec, opts.seed ^ size as u64);
    let now = spec.start + spec.time_span;
    // warm caches with a throwaway pass over a few queries
    run_queries(&mut weave, &queries[..queries.len().min(8)], now).map_err(|e| e.to_string())?;
    let lat = run_queries(&mut weave, &queries, now).map_err(|e| e.to_string())?;
    let by_kind = |k: QueryKind| -> Vec<f64> {
        lat.iter().enumerate().filter(|(i, _)| query_kind(*i) == k).map(|(_, l)| *l).collect()
    };
    let mut sorted = lat.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(LatencyRow {
        store_size: size,
        p50_ms: percentile(&sorted, 50.0),
        p95_ms: percentile(&sorted, 95.0),
        mean_ms: mean(&lat),
        text_mean_ms: mean(&by_kind(QueryKind::Text)),
        temporal_mean_ms: mean(&by_kind(QueryKind::Temporal)),
        hybrid_mean_ms: mean(&by_kind(QueryKind::Hybrid)),
        build_ms,
        corpus_hash: format!("{hash:016x}"),
    })
}

pub fn bench_latency(opts: &BenchOptions, config: &EngineConfig) -> Result<LatencyReport, String> {
    if opts.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err("sizes must be strictly increasing".into());
    }
    if opts.queries_per_size == 0 {
        return Err("queries_per_size must be positive".into());
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &size in &opts.sizes {
        match measure_size(opts, config, size) {
            Ok(row) => rows.push(row),
            Err(error) => failures.push(SizeFailure { store_size: size, error }),
        }
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.store_size as f64, r.mean_ms)).collect();
    Ok(LatencyReport { fitted_exponent: loglog_slope(&points), rows, failures })
}
