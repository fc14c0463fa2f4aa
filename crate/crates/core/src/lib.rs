//! Dual-memory retrieval-augmented anomaly analysis for structured
//! network-flow logs.
//!
//! Flows are scored by a logistic model, analyzed by a language model whose
//! prompt carries a short-term buffer of recent summaries and the most similar
//! long-term memories, and the buffer is periodically compressed with Bayesian
//! fusion of its confidences deciding what is kept long term.

pub mod confidence;
pub mod config;
pub mod eval;
pub mod fusion;
pub mod http;
pub mod ingest;
pub mod llm;
pub mod memory;
pub mod pipeline;
pub mod synth;

pub use confidence::{LogisticModel, TrainConfig, TrainOutcome};
pub use config::AppConfig;
pub use eval::{compute_metrics, emit_report, GroundTruth, MetricsReport};
pub use fusion::{BetaParams, Channel, FusionBundle, FusionModel};
pub use ingest::{AttackCategory, LabeledInstance, NormalizationStats, RawLogRecord};
pub use llm::{AnalysisResponse, LlmBackend, MockBackend, ParseFailure, ParseReason};
pub use memory::{Embedder, HashEmbedder, LtmStore, StmBuffer, StmEntry};
pub use pipeline::{AnalysisRecord, Models, Pipeline, PipelineConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
