//! HTTP binding of the semantic-oracle port.
//!
//! Every call is one `POST` of `{"mode": "transform"|"synthesize"|"suggest",
//! "payload": ...}` to the configured endpoint. Responses are the JSON forms
//! of the corresponding output types; `suggest` may answer `null`. HTTP 429 is
//! retried with exponential backoff, everything else fails immediately.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use serde_json::json;
use weave_core::oracle::{
    OracleTransformOutput, ParticleView, RelationSuggestion, SemanticOracle, SynthesisRequest, SynthesisResult,
};
use weave_core::{Error, Result, Signifier, SituationalImprint};

pub const ENV_ENDPOINT: &str = "ORACLE_ENDPOINT";
pub const ENV_TOKEN: &str = "ORACLE_TOKEN";
pub const ENV_TIMEOUT_MS: &str = "ORACLE_TIMEOUT_MS";

/// Annotation added to the imprint when the remote returns a marker outside
/// the closed signifier set.
pub const UNKNOWN_SIGNIFIER_NOTE: &str = "oracle_note";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub backoff_base: Duration,
    pub max_attempts: u32,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            timeout: Duration::from_millis(30_000),
            max_in_flight: 4,
            backoff_base: Duration::from_millis(250),
            max_attempts: 5,
        }
    }

    /// Reads `ORACLE_ENDPOINT`, `ORACLE_TOKEN` and `ORACLE_TIMEOUT_MS`.
    /// Returns `None` when no endpoint is set.
    pub fn from_env() -> std::result::Result<Option<Self>, String> {
        let Ok(endpoint) = std::env::var(ENV_ENDPOINT) else { return Ok(None) };
        let mut cfg = Self::new(endpoint);
        cfg.token = std::env::var(ENV_TOKEN).ok().filter(|t| !t.is_empty());
        if let Ok(ms) = std::env::var(ENV_TIMEOUT_MS) {
            let ms: u64 = ms.parse().map_err(|_| format!("{ENV_TIMEOUT_MS} must be an integer, got {ms:?}"))?;
            cfg.timeout = Duration::from_millis(ms);
        }
        Ok(Some(cfg))
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock();
        while *free == 0 {
            self.cv.wait(&mut free);
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock() += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteOracle {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    slots: Slots,
}

impl std::fmt::Debug for RemoteOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteOracle").field("endpoint", &self.cfg.endpoint).finish()
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    mode: &'a str,
    payload: T,
}

/// Transform output as sent over the wire: signifiers are free strings.
#[derive(Deserialize)]
struct WireTransform {
    resonance_keys: Vec<String>,
    #[serde(default)]
    signifiers: Vec<String>,
    #[serde(default)]
    imprint_enrichment: BTreeMap<String, String>,
    core_data: String,
}

impl RemoteOracle {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Slots { free: Mutex::new(cfg.max_in_flight.max(1)), cv: Condvar::new() };
        Self { cfg, agent, slots }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    /// Sends one envelope and parses the 2xx body as `T`.
    pub fn call<T: for<'de> Deserialize<'de>>(&self, mode: &str, payload: impl Serialize) -> Result<T> {
        let body = serde_json::to_string(&Envelope { mode, payload })
            .map_err(|e| Error::Oracle(format!("encoding request: {e}")))?;
        let _slot = self.slots.acquire();
        let mut delay = self.cfg.backoff_base;
        for attempt in 1..=self.cfg.max_attempts {
            let mut req = self.agent.post(&self.cfg.endpoint).header("content-type", "application/json");
            if let Some(token) = &self.cfg.token {
                req = req.header("authorization", &format!("Bearer {token}"));
            }
            let mut resp = req.send(body.as_str()).map_err(|e| Error::Oracle(format!("transport: {e}")))?;
            let status = resp.status().as_u16();
            if status == 429 {
                if attempt == self.cfg.max_attempts {
                    break;
                }
                tracing::debug!(attempt, ?delay, "oracle rate limited, backing off");
                std::thread::sleep(delay);
                delay *= 2;
                continue;
            }
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| Error::Oracle(format!("transport: reading body: {e}")))?;
            if !(200..300).contains(&status) {
                return Err(Error::Oracle(format!("status {status}: {}", text.chars().take(200).collect::<String>())));
            }
            return serde_json::from_str(&text).map_err(|e| Error::Oracle(format!("schema: {e}")));
        }
        Err(Error::Oracle(format!("retry exhausted after {} rate-limited attempts", self.cfg.max_attempts)))
    }
}

fn map_signifiers(raw: Vec<String>, enrichment: &mut BTreeMap<String, String>) -> BTreeSet<Signifier> {
    let mut out = BTreeSet::new();
    let mut unknown = Vec::new();
    for s in raw {
        match Signifier::parse(&s) {
            Some(sig) => {
                out.insert(sig);
            }
            None => {
                out.insert(Signifier::Assertion);
                unknown.push(s);
            }
        }
    }
    if !unknown.is_empty() {
        enrichment.insert(
            UNKNOWN_SIGNIFIER_NOTE.into(),
            format!("unknown signifiers mapped to assertion: {}", unknown.join(",")),
        );
    }
    out
}

impl SemanticOracle for RemoteOracle {
    fn transform(&self, raw: &str, imprint: &SituationalImprint) -> Result<OracleTransformOutput> {
        if raw.trim().is_empty() {
            return Err(Error::EmptyInput);
        }
        let w: WireTransform = self.call("transform", json!({ "raw": raw, "imprint": imprint }))?;
        let mut enrichment = w.imprint_enrichment;
        let signifiers = map_signifiers(w.signifiers, &mut enrichment);
        let mut seen = BTreeSet::new();
        let keys = w
            .resonance_keys
            .into_iter()
            .map(|k| k.trim().to_lowercase())
            .filter(|k| !k.is_empty() && seen.insert(k.clone()))
            .collect();
        Ok(OracleTransformOutput { resonance_keys: keys, signifiers, imprint_enrichment: enrichment, core_data: w.core_data })
    }

    fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisResult> {
        let out: SynthesisResult = self.call("synthesize", req)?;
        out.check(req)?;
        Ok(out)
    }

    fn suggest_relation(&self, a: &ParticleView, b: &ParticleView) -> Result<Option<RelationSuggestion>> {
        let out: Option<RelationSuggestion> = self.call("suggest", json!({ "a": a, "b": b }))?;
        if let Some(s) = &out {
            s.check()?;
        }
        Ok(out)
    }
}
