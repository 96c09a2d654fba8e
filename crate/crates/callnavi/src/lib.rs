//! Evaluation harness and scoring engine for LLM API function calling.
//!
//! Loads CallNavi-format API catalogs and question files, queries models
//! through pluggable backends using three inference strategies (direct,
//! two-step routing, backward inference), repairs and parses structured
//! model output, and scores predictions with AST-match metrics, an optional
//! LLM judge, and stability scores over repeated runs.
//!
//! Start with the `examples/` directory of this crate: there is one runnable
//! example per major capability (loading, scoring, repair, stability, each
//! strategy, and a full scripted benchmark run).

pub mod backends;
pub mod codec;
pub mod dataset;
pub mod runner;
pub mod scoring;
pub mod stability;
pub mod strategies;

pub use codec::{CallPlan, CallStep, OutputFormat, RawOutput};
pub use dataset::{ApiCatalog, ApiSpec, Difficulty, GroundTruth, Question};
pub use scoring::{Report, ScoreRecord};

/// Ground-truth argument value meaning "comes from a prior call's output";
/// excluded from strict value comparison.
pub const PLACEHOLDER: &str = "$$$";
