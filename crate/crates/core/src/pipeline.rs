//! Online analysis loop.
//!
//! For each log, in order: score with the logistic model, retrieve related
//! long-term memories, prompt the backend, parse its reply (falling back to the
//! logistic verdict when the reply is unusable), push the summary into
//! short-term memory, and compress that memory whenever it fills. Compression
//! fuses the buffered confidences and promotes the merged summary to long-term
//! memory when the fused value clears the threshold.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceError, LogisticModel};
use crate::fusion::{FusionError, FusionModel};
use crate::ingest::schema::AttackCategory;
use crate::ingest::{normalize_features, IngestError, NormalizationStats, RawLogRecord};
use crate::llm::{
    build_analysis_prompt, build_compression_prompt, parse_response, truncate_words, CompletionRequest,
    LlmBackend, LlmError, ParseFailure, Task, MERGED_SUMMARY_MAX_WORDS,
};
use crate::memory::{Embedder, LtmStore, MemoryError, StmBuffer, StmEntry, DEFAULT_STM_CAPACITY};

/// Words kept from each member summary when compression falls back to
/// concatenation.
const FALLBACK_MERGE_WORDS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stm_capacity: usize,
    /// Fused confidence must be strictly greater than this to promote a merged
    /// summary.
    pub promotion_threshold: f64,
    /// Logistic confidence at or above this promotes an individual summary.
    pub individual_promotion_threshold: f64,
    pub retrieval_k: usize,
    /// Ask the backend once more before falling back on an unparseable reply.
    pub reask_on_parse_failure: bool,
    /// Optional cap on long-term memory size; oldest entries are evicted.
    pub ltm_max_entries: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stm_capacity: DEFAULT_STM_CAPACITY,
            promotion_threshold: 0.9,
            individual_promotion_threshold: 0.9,
            retrieval_k: 10,
            reask_on_parse_failure: false,
            ltm_max_entries: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.stm_capacity < 1 {
            return bad("stm_capacity must be at least 1");
        }
        if self.retrieval_k < 1 {
            return bad("retrieval_k must be at least 1");
        }
        for (name, t) in [
            ("promotion_threshold", self.promotion_threshold),
            ("individual_promotion_threshold", self.individual_promotion_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.ltm_max_entries == Some(0) {
            return bad("ltm_max_entries must be positive when set");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("log {log_id}: {source}")]
    Normalize {
        log_id: u64,
        #[source]
        source: IngestError,
    },
    #[error("log {log_id}: {source}")]
    Memory {
        log_id: u64,
        #[source]
        source: MemoryError,
    },
    #[error("log {log_id}: {source}")]
    Fusion {
        log_id: u64,
        #[source]
        source: FusionError,
    },
    #[error("log {log_id}: {source}")]
    Confidence {
        log_id: u64,
        #[source]
        source: ConfidenceError,
    },
    #[error("log {log_id}: {source}")]
    Prompt {
        log_id: u64,
        #[source]
        source: LlmError,
    },
    #[error("log {log_id}: writing output: {source}")]
    Output {
        log_id: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("setup: {0}")]
    Setup(String),
}

/// Per-log output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub log_id: u64,
    pub label: u8,
    pub attack_cat: AttackCategory,
    pub short_summary: String,
    pub lr_confidence: f64,
    pub used_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
    #[serde(default)]
    pub summary_truncated: bool,
    pub stm_snapshot_size: usize,
    pub retrieved_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromotionKind {
    Individual,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionEvent {
    pub after_log_id: u64,
    pub confidences: Vec<f64>,
    pub fused_confidence: f64,
    pub merged_summary: String,
    /// Backend failed and the merged text was built by concatenation.
    pub used_fallback_text: bool,
    pub promoted_ltm_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PipelineEvent {
    Promotion {
        ltm_id: u64,
        log_id: u64,
        confidence: f64,
        kind: PromotionKind,
    },
    Compression(CompressionEvent),
}

/// Trained models the pipeline scores with.
#[derive(Debug, Clone)]
pub struct Models {
    pub normalizer: NormalizationStats,
    pub confidence: LogisticModel,
    /// Single-channel model used to fuse buffered confidences.
    pub fusion: FusionModel,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    models: Models,
    embedder: Box<dyn Embedder>,
    backend: Box<dyn LlmBackend>,
    stm: StmBuffer,
    ltm: LtmStore,
    clock: u64,
    events: Vec<PipelineEvent>,
}

enum Verdict {
    Parsed {
        label: u8,
        attack_cat: AttackCategory,
        summary: String,
        truncated: bool,
    },
    Fallback(String),
}

impl Pipeline {
    pub fn new(
        cfg: PipelineConfig,
        models: Models,
        embedder: Box<dyn Embedder>,
        backend: Box<dyn LlmBackend>,
        ltm: LtmStore,
    ) -> Result<Self, PipelineError> {
        cfg.validate()?;
        models
            .confidence
            .check_normalizer(&models.normalizer)
            .map_err(|e| PipelineError::Setup(e.to_string()))?;
        models
            .fusion
            .validate()
            .map_err(|e| PipelineError::Setup(e.to_string()))?;
        if models.fusion.channels.len() != 1 {
            return Err(PipelineError::Setup(format!(
                "fusion model must have one confidence channel, found {}",
                models.fusion.channels.len()
            )));
        }
        if embedder.dimension() != ltm.dimension() {
            return Err(PipelineError::Setup(format!(
                "embedder dimension {} does not match long-term memory dimension {}",
                embedder.dimension(),
                ltm.dimension()
            )));
        }
        if !ltm.is_empty() && ltm.embedder_id() != embedder.id() {
            log::warn!(
                "long-term memory was built with embedder {:?}, now using {:?}",
                ltm.embedder_id(),
                embedder.id()
            );
        }
        let clock = ltm.entries().iter().map(|e| e.created_at + 1).max().unwrap_or(0);
        let ltm = ltm.with_max_entries(cfg.ltm_max_entries);
        Ok(Self {
            stm: StmBuffer::new(cfg.stm_capacity),
            cfg,
            models,
            embedder,
            backend,
            ltm,
            clock,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn stm(&self) -> &StmBuffer {
        &self.stm
    }

    pub fn ltm(&self) -> &LtmStore {
        &self.ltm
    }

    pub fn into_ltm(self) -> LtmStore {
        self.ltm
    }

    pub fn events(&self) -> &[PipelineEvent] {
        &self.events
    }

    pub fn compression_events(&self) -> impl Iterator<Item = &CompressionEvent> {
        self.events.iter().filter_map(|e| match e {
            PipelineEvent::Compression(c) => Some(c),
            PipelineEvent::Promotion { .. } => None,
        })
    }

    /// Analyze every record in order.
    pub fn analyze_stream(&mut self, logs: &[RawLogRecord]) -> Result<Vec<AnalysisRecord>, PipelineError> {
        logs.iter().map(|r| self.process(r)).collect()
    }

    /// Analyze every record, writing one JSON line per result.
    pub fn analyze_to_writer<W: Write>(
        &mut self,
        logs: &[RawLogRecord],
        out: &mut W,
    ) -> Result<usize, PipelineError> {
        for record in logs {
            let result = self.process(record)?;
            let line = serde_json::to_string(&result).expect("record serializes");
            writeln!(out, "{line}").map_err(|source| PipelineError::Output {
                log_id: record.id,
                source,
            })?;
        }
        Ok(logs.len())
    }

    fn tick(&mut self) -> u64 {
        let t = self.clock;
        self.clock += 1;
        t
    }

    fn embed(&self, log_id: u64, text: &str) -> Result<Vec<f32>, PipelineError> {
        self.embedder
            .embed(text)
            .map_err(|source| PipelineError::Memory { log_id, source })
    }

    fn ask(&self, prompt: &str, log_id: u64, lr_score: f64) -> Verdict {
        let request = |p: &str| {
            self.backend.complete(&CompletionRequest {
                prompt: p,
                task: Task::Analysis { log_id, lr_score },
            })
        };
        let interpret = |reply: &str| -> Result<Verdict, ParseFailure> {
            let parsed = parse_response(reply, log_id)?;
            Ok(Verdict::Parsed {
                label: parsed.response.label,
                attack_cat: parsed.response.attack_cat,
                summary: parsed.response.short_summary,
                truncated: parsed.summary_truncated,
            })
        };

        let reply = match request(prompt) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("log {log_id}: backend error: {e}");
                return Verdict::Fallback("backend_error".to_string());
            }
        };
        match interpret(&reply) {
            Ok(v) => v,
            Err(first) if self.cfg.reask_on_parse_failure => {
                let retry_prompt = format!(
                    "{prompt}\nYour previous reply could not be used ({}). Reply again with only the JSON object.\n",
                    first.reason
                );
                match request(&retry_prompt).map(|r| interpret(&r)) {
                    Ok(Ok(v)) => v,
                    Ok(Err(second)) => Verdict::Fallback(second.reason.code().to_string()),
                    Err(_) => Verdict::Fallback("backend_error".to_string()),
                }
            }
            Err(failure) => {
                log::debug!("log {log_id}: unusable reply: {failure}");
                Verdict::Fallback(failure.reason.code().to_string())
            }
        }
    }

    /// Run one log through the full loop.
    pub fn process(&mut self, record: &RawLogRecord) -> Result<AnalysisRecord, PipelineError> {
        let log_id = record.id;
        let x = normalize_features(record, &self.models.normalizer)
            .map_err(|source| PipelineError::Normalize { log_id, source })?;
        let lr = self
            .models
            .confidence
            .score(&x)
            .map_err(|source| PipelineError::Confidence { log_id, source })?;

        let rendered = record.render();
        let query = self.embed(log_id, &rendered)?;
        let hits = self
            .ltm
            .search(&query, self.cfg.retrieval_k)
            .map_err(|source| PipelineError::Memory { log_id, source })?;
        let retrieved_count = hits.len();
        let stm_snapshot_size = self.stm.len();
        let prompt = build_analysis_prompt(log_id, &rendered, &self.stm, &hits);

        let (label, attack_cat, summary, truncated, fallback_reason) = match self.ask(&prompt, log_id, lr) {
            Verdict::Parsed {
                label,
                attack_cat,
                summary,
                truncated,
            } => (label, attack_cat, summary, truncated, None),
            Verdict::Fallback(reason) => {
                let label = u8::from(lr >= 0.5);
                let cat = if label == 1 {
                    AttackCategory::Generic
                } else {
                    AttackCategory::Normal
                };
                let summary = format!("Fallback verdict from logistic anomaly score {lr:.4} ({reason}).");
                (label, cat, summary, false, Some(reason))
            }
        };

        let timestamp = self.tick();
        let full = self
            .stm
            .push(StmEntry {
                log_id,
                summary: summary.clone(),
                confidence: lr,
                timestamp,
                is_merged: false,
            })
            .map_err(|source| PipelineError::Memory { log_id, source })?;

        if lr >= self.cfg.individual_promotion_threshold {
            let v = self.embed(log_id, &summary)?;
            let ltm_id = self
                .ltm
                .add(summary.clone(), lr, v, vec![log_id], timestamp)
                .map_err(|source| PipelineError::Memory { log_id, source })?;
            self.events.push(PipelineEvent::Promotion {
                ltm_id,
                log_id,
                confidence: lr,
                kind: PromotionKind::Individual,
            });
        }

        if full {
            self.compress_stm(log_id)?;
        }

        Ok(AnalysisRecord {
            log_id,
            label,
            attack_cat,
            short_summary: summary,
            lr_confidence: lr,
            used_fallback: fallback_reason.is_some(),
            fallback_reason,
            summary_truncated: truncated,
            stm_snapshot_size,
            retrieved_count,
        })
    }

    /// Merge the full short-term memory into one entry, fuse its confidences
    /// and promote the merged summary when the fused value exceeds the
    /// threshold.
    pub fn compress_stm(&mut self, log_id: u64) -> Result<CompressionEvent, PipelineError> {
        let prompt =
            build_compression_prompt(&self.stm).map_err(|source| PipelineError::Prompt { log_id, source })?;
        let reply = self.backend.complete(&CompletionRequest {
            prompt: &prompt,
            task: Task::Compression {
                entries: self.stm.len(),
            },
        });
        let (merged, used_fallback_text) = match reply {
            Ok(text) if !text.trim().is_empty() => (truncate_words(&text, MERGED_SUMMARY_MAX_WORDS).0, false),
            other => {
                if let Err(e) = other {
                    log::warn!("log {log_id}: compression backend error: {e}");
                }
                let joined = self
                    .stm
                    .iter()
                    .map(|e| truncate_words(&e.summary, FALLBACK_MERGE_WORDS).0)
                    .collect::<Vec<_>>()
                    .join(" | ");
                (joined, true)
            }
        };

        let confidences = self.stm.confidences();
        let fused = self
            .models
            .fusion
            .fuse_confidences(&confidences)
            .map_err(|source| PipelineError::Fusion { log_id, source })?;
        let timestamp = self.stm.last_timestamp().unwrap_or(self.clock);

        let mut promoted_ltm_id = None;
        if fused > self.cfg.promotion_threshold {
            let mut sources: Vec<u64> = self.stm.iter().map(|e| e.log_id).collect();
            sources.sort_unstable();
            sources.dedup();
            let v = self.embed(log_id, &merged)?;
            let ltm_id = self
                .ltm
                .add(merged.clone(), fused, v, sources, timestamp)
                .map_err(|source| PipelineError::Memory { log_id, source })?;
            self.events.push(PipelineEvent::Promotion {
                ltm_id,
                log_id,
                confidence: fused,
                kind: PromotionKind::Merged,
            });
            promoted_ltm_id = Some(ltm_id);
        }

        self.stm
            .reset_to(StmEntry {
                log_id,
                summary: merged.clone(),
                confidence: fused,
                timestamp,
                is_merged: true,
            })
            .map_err(|source| PipelineError::Memory { log_id, source })?;

        let event = CompressionEvent {
            after_log_id: log_id,
            confidences,
            fused_confidence: fused,
            merged_summary: merged,
            used_fallback_text,
            promoted_ltm_id,
        };
        self.events.push(PipelineEvent::Compression(event.clone()));
        Ok(event)
    }
}
