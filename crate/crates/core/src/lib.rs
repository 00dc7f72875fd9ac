//! Trace-driven cache analysis toolkit.
//!
//! The crate is organized as a pipeline over memory-access traces:
//!
//! - [`trace`]: the trace data model, the canonical text format, a synthetic
//!   generator with planted phases and streams, and forward reuse distances.
//! - [`cachesim`]: a set-associative cache simulator with LRU, Bélády and a
//!   phase-frequency lookup policy.
//! - [`phases`]: phase extraction from reuse-distance and delta-PC histograms.
//! - [`streams`]: strided stream detection and counterfactual trace edits.
//! - [`model`]: an LSTM + attention eviction model trained by imitating Bélády.
//! - [`probe`]: PCA, phase correlation and activation comparison.

pub mod cachesim;
pub mod error;
pub mod model;
pub mod phases;
pub mod probe;
pub mod streams;
pub mod trace;

pub use error::{Error, Result};
