//! Thread-safe, durable engine around a [`Weave`].
//!
//! Reads take a shared lock and never wait on the oracle. Writes are
//! serialized by the writer mutex, which also owns the log. A refinement
//! cycle runs on a private copy while readers keep serving the old state,
//! then swaps it in. Accesses recorded while the writer is busy are queued
//! and applied by the next writer.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use weave_core::embed::{DeterministicEmbedder, Embedder};
use weave_core::oracle::{OracleTransformOutput, ParticleView, RelationSuggestion, SemanticOracle, SynthesisRequest, SynthesisResult};
use weave_core::query::{QuerySpec, RecallResult};
use weave_core::refine::{should_refine, RefinementReport};
use weave_core::weave::{Cascade, DeletionReport, EngineStats, IntegrityViolation, ScanFilter};
use weave_core::{
    EngineConfig, InsightParticle, Millis, ParticleId, RelationalStrand, SituationalImprint, StrandEvidence,
    StrandType, Weave,
};

use crate::error::{Error, Result};
use crate::settings::Settings;
use crate::store::{read_log, read_snapshot, write_snapshot, LogRecord, LogWriter};

pub const LOG_FILE: &str = "weave.log";
pub const SNAPSHOT_FILE: &str = "weave.snapshot";

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Millis;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as Millis)
    }
}

/// Clock under test control.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: Millis) -> Self {
        Self(AtomicI64::new(start))
    }

    pub fn set(&self, t: Millis) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, dt: Millis) -> Millis {
        self.0.fetch_add(dt, Ordering::SeqCst) + dt
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> Millis {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub config: EngineConfig,
    pub data_dir: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub write_lock_timeout: Duration,
    pub fsync: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self::from(&Settings::default())
    }
}

impl From<&Settings> for EngineOptions {
    fn from(s: &Settings) -> Self {
        Self {
            config: s.engine.clone(),
            data_dir: s.data_dir.clone(),
            audit_log: s.audit_log.clone(),
            write_lock_timeout: Duration::from_millis(s.write_lock_timeout_ms),
            fsync: s.fsync,
        }
    }
}

/// Engine statistics plus the cost of the last startup rebuild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    #[serde(flatten)]
    pub engine: EngineStats,
    pub rebuild_ms: f64,
}

/// Oracle stand-in that replays a transform computed before the write lock
/// was taken.
struct Precomputed(OracleTransformOutput);

impl SemanticOracle for Precomputed {
    fn transform(&self, _raw: &str, _imprint: &SituationalImprint) -> weave_core::Result<OracleTransformOutput> {
        Ok(self.0.clone())
    }

    fn synthesize(&self, _req: &SynthesisRequest) -> weave_core::Result<SynthesisResult> {
        Err(weave_core::Error::Oracle("not available during ingest".into()))
    }

    fn suggest_relation(&self, _a: &ParticleView, _b: &ParticleView) -> weave_core::Result<Option<RelationSuggestion>> {
        Ok(None)
    }
}

pub struct Engine {
    state: RwLock<Arc<Weave>>,
    writer: Mutex<Option<LogWriter>>,
    pending_touches: Mutex<Vec<(ParticleId, Millis)>>,
    oracle: Arc<dyn SemanticOracle>,
    clock: Arc<dyn Clock>,
    opts: EngineOptions,
    rebuild_ms: f64,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("data_dir", &self.opts.data_dir).finish()
    }
}

impl Engine {
    /// Opens (or creates) an engine with the deterministic embedder.
    pub fn open(opts: EngineOptions, oracle: Arc<dyn SemanticOracle>, clock: Arc<dyn Clock>) -> Result<Self> {
        let embedder = Arc::new(DeterministicEmbedder::new(opts.config.dimension));
        Self::open_with_embedder(opts, embedder, oracle, clock)
    }

    /// Restores the latest snapshot in `data_dir` (if any), replays the log
    /// past it, and opens the log for appending.
    pub fn open_with_embedder(
        opts: EngineOptions,
        embedder: Arc<dyn Embedder>,
        oracle: Arc<dyn SemanticOracle>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        let started = Instant::now();
        let mut weave = Weave::with_embedder(opts.config.clone(), embedder.clone())?;
        let mut log = None;
        let mut fresh = true;
        if let Some(dir) = &opts.data_dir {
            std::fs::create_dir_all(dir)?;
            let snap = dir.join(SNAPSHOT_FILE);
            if snap.exists() {
                weave = Weave::from_state(opts.config.clone(), embedder, read_snapshot(&snap)?)?;
                fresh = false;
            }
            let contents = read_log(&dir.join(LOG_FILE))?;
            if contents.torn_tail {
                tracing::warn!("dropping torn final log frame");
            }
            for r in contents.records {
                fresh = false;
                if r.seq > weave.seq() {
                    weave.apply(r.seq, r.change)?;
                }
            }
            log = Some(LogWriter::open(&dir.join(LOG_FILE), contents.valid_len, opts.fsync)?);
        }
        weave.take_journal();
        let rebuild_ms = started.elapsed().as_secs_f64() * 1e3;
        let engine = Self {
            state: RwLock::new(Arc::new(weave)),
            writer: Mutex::new(log),
            pending_touches: Mutex::new(Vec::new()),
            oracle,
            clock,
            opts,
            rebuild_ms,
        };
        if fresh {
            let now = engine.now();
            engine.write(|w| {
                w.mark_refined(now);
                Ok(())
            })?;
        }
        Ok(engine)
    }

    /// Memory-only engine with the mock oracle and system clock.
    pub fn in_memory(config: EngineConfig) -> Result<Self> {
        let oracle = Arc::new(weave_core::oracle::MockOracle::new(
            config.dimension,
            config.oracle.max_core_data_chars,
            config.cluster.min_cluster_size,
        ));
        let opts = EngineOptions { config, ..EngineOptions::default() };
        Self::open(opts, oracle, Arc::new(SystemClock))
    }

    pub fn now(&self) -> Millis {
        self.clock.now_ms()
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    /// Point-in-time view of the whole state.
    pub fn snapshot_view(&self) -> Arc<Weave> {
        self.state.read().clone()
    }

    fn lock_writer(&self) -> Result<parking_lot::MutexGuard<'_, Option<LogWriter>>> {
        self.writer
            .try_lock_for(self.opts.write_lock_timeout)
            .ok_or(Error::Busy(self.opts.write_lock_timeout.as_millis() as u64))
    }

    /// Runs `f` as the single writer and persists what it changed.
    fn write<T>(&self, f: impl FnOnce(&mut Weave) -> weave_core::Result<T>) -> Result<T> {
        let mut log = self.lock_writer()?;
        let (out, journal) = {
            let mut guard = self.state.write();
            let w = Arc::make_mut(&mut guard);
            self.apply_pending(w);
            let out = f(w);
            (out, w.take_journal())
        };
        Self::persist(&mut log, journal)?;
        Ok(out?)
    }

    fn apply_pending(&self, w: &mut Weave) {
        let pending = std::mem::take(&mut *self.pending_touches.lock());
        for (id, at) in pending {
            w.touch(&[id], at);
        }
    }

    fn persist(log: &mut Option<LogWriter>, journal: Vec<(u64, weave_core::weave::Change)>) -> Result<()> {
        if let Some(log) = log.as_mut() {
            let records: Vec<LogRecord> = journal.into_iter().map(|(seq, change)| LogRecord { seq, change }).collect();
            log.append(&records)?;
        }
        Ok(())
    }

    pub fn ingest(&self, raw: &str, imprint: SituationalImprint) -> Result<ParticleId> {
        self.ingest_event(raw, imprint, None, None)
    }

    /// Calls the oracle without holding any lock, then stores the particle.
    pub fn ingest_event(
        &self,
        raw: &str,
        imprint: SituationalImprint,
        t_event_start: Option<Millis>,
        t_event_end: Option<Millis>,
    ) -> Result<ParticleId> {
        if raw.trim().is_empty() {
            return Err(weave_core::Error::EmptyInput.into());
        }
        let out = self.oracle.transform(raw, &imprint)?;
        let now = self.now();
        let pre = Precomputed(out);
        self.write(|w| w.ingest_event(raw, imprint, t_event_start, t_event_end, now, &pre))
    }

    pub fn put(&self, p: InsightParticle) -> Result<ParticleId> {
        self.write(|w| w.put(p))
    }

    pub fn get(&self, id: ParticleId) -> Result<InsightParticle> {
        Ok(self.state.read().get(id)?.clone())
    }

    pub fn delete(&self, id: ParticleId, cascade: Cascade) -> Result<DeletionReport> {
        self.write(|w| w.delete(id, cascade))
    }

    pub fn scan(&self, filter: &ScanFilter) -> Vec<InsightParticle> {
        self.state.read().scan(filter).into_iter().cloned().collect()
    }

    pub fn add_strand(
        &self,
        src: ParticleId,
        dst: ParticleId,
        strand_type: StrandType,
        evidence: StrandEvidence,
    ) -> Result<RelationalStrand> {
        let now = self.now();
        self.write(|w| w.add_strand(src, dst, strand_type, evidence, now))
    }

    /// Hybrid recall. Hits are touched right away when the writer is free,
    /// otherwise queued for the next writer.
    pub fn query(&self, spec: &QuerySpec) -> Result<RecallResult> {
        let started = Instant::now();
        let now = self.now();
        // Holding the guard rather than cloning the Arc keeps writers from
        // having to copy the state while a query runs.
        let mut result = self.state.read().query(spec, now)?;
        result.latency_ms = started.elapsed().as_secs_f64() * 1e3;
        let ids: Vec<ParticleId> = result.hits.iter().map(|h| h.id).collect();
        if ids.is_empty() {
            return Ok(result);
        }
        match self.writer.try_lock() {
            Some(mut log) => {
                let journal = {
                    let mut guard = self.state.write();
                    let w = Arc::make_mut(&mut guard);
                    self.apply_pending(w);
                    w.touch(&ids, now);
                    w.take_journal()
                };
                Self::persist(&mut log, journal)?;
            }
            None => self.pending_touches.lock().extend(ids.into_iter().map(|id| (id, now))),
        }
        Ok(result)
    }

    /// One refinement cycle. Readers keep the pre-cycle state until the
    /// finished cycle is swapped in.
    pub fn refine(&self) -> Result<RefinementReport> {
        let mut log = self.lock_writer()?;
        let started = Instant::now();
        let now = self.now();
        let mut work: Weave = (**self.state.read()).clone();
        let mut report = work.refine(&*self.oracle, now);
        let journal = {
            let mut guard = self.state.write();
            *guard = Arc::new(work);
            let w = Arc::make_mut(&mut guard);
            self.apply_pending(w);
            w.take_journal()
        };
        Self::persist(&mut log, journal)?;
        drop(log);
        report.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        self.write_audit(&report)?;
        Ok(report)
    }

    /// Runs a cycle if any trigger fires; returns the trigger and report.
    pub fn maybe_refine(&self) -> Result<Option<(&'static str, RefinementReport)>> {
        let stats = self.state.read().stats();
        match should_refine(&stats, &self.opts.config.triggers, self.now()) {
            Some(reason) => Ok(Some((reason, self.refine()?))),
            None => Ok(None),
        }
    }

    fn write_audit(&self, report: &RefinementReport) -> Result<()> {
        if let Some(path) = &self.opts.audit_log {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let line = serde_json::to_string(report).map_err(|e| Error::Corrupt(e.to_string()))?;
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    pub fn stats(&self) -> Stats {
        Stats { engine: self.state.read().stats(), rebuild_ms: self.rebuild_ms }
    }

    pub fn audit(&self) -> Vec<IntegrityViolation> {
        self.state.read().audit()
    }

    /// Writes a snapshot of the current state to `path`.
    pub fn snapshot_to(&self, path: &Path) -> Result<()> {
        let _log = self.lock_writer()?;
        let state = self.state.read().export_state();
        write_snapshot(path, &state)
    }

    /// Snapshots into the data directory and empties the log.
    pub fn checkpoint(&self) -> Result<()> {
        let Some(dir) = self.opts.data_dir.clone() else {
            return Err(Error::Config("checkpoint needs a data_dir".into()));
        };
        let mut log = self.lock_writer()?;
        let journal = {
            let mut guard = self.state.write();
            let w = Arc::make_mut(&mut guard);
            self.apply_pending(w);
            w.take_journal()
        };
        Self::persist(&mut log, journal)?;
        let state = self.state.read().export_state();
        write_snapshot(&dir.join(SNAPSHOT_FILE), &state)?;
        if let Some(l) = log.as_mut() {
            l.truncate()?;
        }
        Ok(())
    }
}

/// Loads a standalone snapshot file into a weave.
pub fn restore_snapshot(path: &Path, config: EngineConfig) -> Result<Weave> {
    let embedder = Arc::new(DeterministicEmbedder::new(config.dimension));
    Ok(Weave::from_state(config, embedder, read_snapshot(path)?)?)
}

/// Rebuilds a weave by replaying a log file from empty.
pub fn replay_log(path: &Path, config: EngineConfig) -> Result<Weave> {
    let mut w = Weave::new(config)?;
    for r in read_log(path)?.records {
        w.apply(r.seq, r.change)?;
    }
    w.take_journal();
    Ok(w)
}
