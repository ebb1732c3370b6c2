//! Benchmark harness for attributed information seeking.
//!
//! Three answer-generation architectures (closed-book generation,
//! retrieve-then-generate and generate-then-retrieve) share one corpus,
//! one lexical index and one model gateway, and are scored for answer
//! correctness and citation quality.

pub mod corpus;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod modelio;
pub mod pipelines;
pub mod retrieval;
pub mod text;

pub use error::{Error, Result};

/// Metric name to value. Undefined metrics are absent rather than NaN.
pub type MetricMap = std::collections::BTreeMap<String, f64>;
