//! Durable engine, HTTP service, remote oracle client, workload generator and
//! latency benchmark for the insight-particle memory engine in `weave-core`.

pub mod bench;
pub mod engine;
mod error;
pub mod remote;
pub mod service;
pub mod settings;
pub mod store;
pub mod workload;

pub use engine::{Clock, Engine, EngineOptions, ManualClock, SystemClock};
pub use error::{Error, ErrorClass, Result};
pub use settings::Settings;
pub use weave_core;
