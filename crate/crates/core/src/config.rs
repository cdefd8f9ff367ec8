//! Engine configuration. Every section deserializes with its documented
//! defaults, so a partial document is valid.

use serde::{Deserialize, Serialize};

use crate::embed::DEFAULT_DIMENSION;
use crate::graph::StrandWeights;
use crate::refine::{ClusterConfig, DecayParams, IAObjectiveWeights, RecalibrationCoeffs, RefinementTriggers};
use crate::vector::AnnParams;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Embedding dimension of the deterministic embedder.
    pub dimension: usize,
    /// Seed mixed into particle-id minting.
    pub seed: u64,
    pub initial_importance: f64,
    pub ann: AnnParams,
    pub strand_weights: StrandWeights,
    pub cluster: ClusterConfig,
    pub triggers: RefinementTriggers,
    pub objective: IAObjectiveWeights,
    pub recalibration: RecalibrationCoeffs,
    pub decay: DecayParams,
    pub prune: PruneConfig,
    pub query: QueryConfig,
    pub oracle: OracleLimits,
    pub refinement: RefinementConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            seed: 0x5eed_cafe,
            initial_importance: 0.5,
            ann: AnnParams::default(),
            strand_weights: StrandWeights::default(),
            cluster: ClusterConfig::default(),
            triggers: RefinementTriggers::default(),
            objective: IAObjectiveWeights::default(),
            recalibration: RecalibrationCoeffs::default(),
            decay: DecayParams::default(),
            prune: PruneConfig::default(),
            query: QueryConfig::default(),
            oracle: OracleLimits::default(),
            refinement: RefinementConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn check(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(crate::Error::Config("dimension must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_importance) {
            return Err(crate::Error::Config("initial_importance must lie in [0,1]".into()));
        }
        self.ann.check()?;
        self.strand_weights.check()?;
        self.cluster.check()?;
        self.triggers.check()?;
        self.objective.check()?;
        self.recalibration.check()?;
        self.decay.check()?;
        self.prune.check()?;
        self.query.check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub importance_floor: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self { importance_floor: 0.02 }
    }
}

impl PruneConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.importance_floor) {
            return Err(crate::Error::Config("importance_floor must lie in [0,1)".into()));
        }
        Ok(())
    }
}

/// Recall ranking knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub similarity_weight: f64,
    pub importance_weight: f64,
    /// Below this many prefiltered candidates an ANN query scans them exactly.
    pub exact_scan_threshold: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self { similarity_weight: 0.7, importance_weight: 0.3, exact_scan_threshold: 4096 }
    }
}

impl QueryConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.similarity_weight.is_finite() && self.importance_weight.is_finite()) {
            return Err(crate::Error::Config("query weights must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleLimits {
    pub max_core_data_chars: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_core_data_chars: 4096 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    /// Most-similar unlinked pairs offered to the oracle for strand suggestion per cycle.
    pub suggestion_pairs: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self { suggestion_pairs: 50 }
    }
}
