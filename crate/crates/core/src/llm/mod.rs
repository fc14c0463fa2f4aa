//! Prompt construction, model backends and strict reply parsing.

mod backend;
mod parse;
mod prompt;

pub use backend::{
    BackendError, ChatBackend, ChatConfig, CompletionRequest, FnBackend, LlmBackend, MockBackend, Task,
};
pub use parse::{
    extract_json_object, parse_response, truncate_words, AnalysisResponse, ParseFailure, ParseReason,
    ParsedResponse, RESPONSE_KEYS, SUMMARY_MAX_WORDS,
};
pub use prompt::{
    analysis_prompt_parts, build_analysis_prompt, build_compression_prompt, instruction_block,
    render_ltm_section, render_stm_section, PromptParts, MERGED_SUMMARY_MAX_WORDS, NO_RECENT_CONTEXT,
    NO_RETRIEVED_HISTORY, PART1_HEADER, PART2_HEADER, PART3_HEADER, PART4_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("compression needs a full short-term memory ({len}/{capacity} entries)")]
    StmNotFull { len: usize, capacity: usize },
}
