//! Core of the insight-particle memory engine.
//!
//! Everything in this crate is pure computation over in-memory values and only
//! needs `alloc`: the particle model and its validation, the deterministic
//! embedder, the vector/ANN index, the temporal index, the typed strand graph,
//! the semantic-oracle port with its hermetic mock, the refinement math, and
//! [`Weave`], which ties the layers together for ingestion, hybrid recall,
//! refinement and audits.
//!
//! Durability, concurrency, HTTP and the CLI live in the `weave` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod config;
pub mod embed;
mod error;
pub mod graph;
pub mod id;
pub mod model;
pub mod oracle;
pub mod query;
pub mod refine;
pub mod temporal;
pub mod text;
pub mod vector;
pub mod weave;

pub use config::EngineConfig;
pub use error::{Error, Result};
pub use id::{new_particle_id, ParticleId, StrandId};
pub use model::{
    AccessMetrics, InsightParticle, ParticleKind, RelationalStrand, Signifier, SituationalImprint,
    StrandEvidence, StrandType, TemporalMetadata,
};
pub use weave::Weave;

/// Epoch milliseconds, UTC.
pub type Millis = i64;
