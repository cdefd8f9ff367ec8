//! The single engine configuration document (TOML).
//!
//! ```toml
//! data_dir = "./weave-data"       # omit for a memory-only engine
//! audit_log = "./refinement.jsonl"
//! listen = "127.0.0.1:7700"
//! write_lock_timeout_ms = 5000
//! fsync = true
//! refine_poll_ms = 60000          # 0 disables the background scheduler
//! api_token = "secret"            # optional bearer token for the service
//!
//! [engine]                        # every key optional, defaults shown in the README
//! dimension = 64
//! [engine.cluster]
//! tau_cluster = 0.6
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weave_core::EngineConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub data_dir: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub listen: String,
    pub write_lock_timeout_ms: u64,
    pub fsync: bool,
    pub refine_poll_ms: u64,
    pub api_token: Option<String>,
    pub engine: EngineConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            data_dir: None,
            audit_log: None,
            listen: "127.0.0.1:7700".into(),
            write_lock_timeout_ms: 5_000,
            fsync: true,
            refine_poll_ms: 60_000,
            api_token: None,
            engine: EngineConfig::default(),
        }
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Settings = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.engine.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(Settings::parse("").unwrap(), Settings::default());
    }

    #[test]
    fn nested_sections_override_single_keys() {
        let s = Settings::parse("fsync = false\n[engine.cluster]\ntau_cluster = 0.7\n[engine.decay]\ni_base = 0.1\n").unwrap();
        assert!(!s.fsync);
        assert_eq!(s.engine.cluster.tau_cluster, 0.7);
        assert_eq!(s.engine.cluster.q_min, 0.55);
        assert_eq!(s.engine.decay.i_base, 0.1);
        assert_eq!(s.engine.decay.lambda_decay, 8.0e-9);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Settings::parse("[engine.cluster]\nmin_cluster_size = 1\n").is_err());
        assert!(Settings::parse("no_such_key = 1\n").is_err());
    }
}
