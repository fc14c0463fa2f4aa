use std::fmt::Write;

use crate::ingest::schema::AttackCategory;
use crate::memory::{SearchHit, StmBuffer};

use super::LlmError;

pub const NO_RECENT_CONTEXT: &str = "(no recent context)";
pub const NO_RETRIEVED_HISTORY: &str = "(no related history retrieved)";

pub const PART1_HEADER: &str = "### Part 1: Current log entry";
pub const PART2_HEADER: &str = "### Part 2: Recent context (short-term memory)";
pub const PART3_HEADER: &str = "### Part 3: Related history (long-term memory)";
pub const PART4_HEADER: &str = "### Part 4: Task";

/// Word limit for merged summaries.
pub const MERGED_SUMMARY_MAX_WORDS: usize = 120;

/// The four sections of an analysis prompt, in presentation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptParts {
    pub current_log_json: String,
    pub stm_section: String,
    pub ltm_section: String,
    pub instruction_block: String,
}

impl PromptParts {
    pub fn assemble(&self) -> String {
        format!(
            "{PART1_HEADER}\n{}\n\n{PART2_HEADER}\n{}\n\n{PART3_HEADER}\n{}\n\n{PART4_HEADER}\n{}\n",
            self.current_log_json, self.stm_section, self.ltm_section, self.instruction_block
        )
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn render_stm_section(stm: &StmBuffer) -> String {
    if stm.is_empty() {
        return NO_RECENT_CONTEXT.to_string();
    }
    let mut out = String::new();
    for (i, e) in stm.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{}. {} (confidence={:.4})", i + 1, one_line(&e.summary), e.confidence);
    }
    out
}

pub fn render_ltm_section(retrieved: &[SearchHit<'_>]) -> String {
    if retrieved.is_empty() {
        return NO_RETRIEVED_HISTORY.to_string();
    }
    let mut out = String::new();
    for (i, hit) in retrieved.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(
            out,
            "{}. {} (similarity={:.4})",
            i + 1,
            one_line(&hit.entry.summary),
            hit.similarity
        );
    }
    out
}

/// Task statement, category list and the strict output directive.
pub fn instruction_block(log_id: u64) -> String {
    let attacks: Vec<&str> = AttackCategory::attacks().iter().map(|c| c.as_str()).collect();
    format!(
        "You are a network security analyst reviewing structured flow logs. \
Using the recent context and related history above, decide whether the current log entry shows attack activity.\n\
If it does, set \"label\" to 1 and choose \"attack_cat\" from: {}.\n\
If it does not, set \"label\" to 0 and \"attack_cat\" to \"{}\".\n\
Describe the observed behavior in \"short_summary\" using fewer than 50 words.\n\
Reply with a single valid JSON object with exactly four keys: \"id\", \"attack_cat\", \"label\", \"short_summary\". \
Set \"id\" to {log_id}. Do not include any other keys, commentary, or formatting.",
        attacks.join(", "),
        AttackCategory::Normal.as_str(),
    )
}

pub fn analysis_prompt_parts(
    log_id: u64,
    current_log_json: &str,
    stm: &StmBuffer,
    retrieved: &[SearchHit<'_>],
) -> PromptParts {
    PromptParts {
        current_log_json: current_log_json.to_string(),
        stm_section: render_stm_section(stm),
        ltm_section: render_ltm_section(retrieved),
        instruction_block: instruction_block(log_id),
    }
}

/// Four-part analysis prompt for one log entry.
pub fn build_analysis_prompt(
    log_id: u64,
    current_log_json: &str,
    stm: &StmBuffer,
    retrieved: &[SearchHit<'_>],
) -> String {
    analysis_prompt_parts(log_id, current_log_json, stm, retrieved).assemble()
}

/// Prompt asking the model to merge a full short-term memory into one
/// narrative summary.
pub fn build_compression_prompt(stm: &StmBuffer) -> Result<String, LlmError> {
    if !stm.is_full() {
        return Err(LlmError::StmNotFull {
            len: stm.len(),
            capacity: stm.capacity(),
        });
    }
    let mut out = String::from("### Memory compression\n");
    let _ = writeln!(
        out,
        "Merge the following {} summaries of consecutive network flows into one narrative summary. \
Combine related observations, drop repeated details, and keep every indicator of attack activity.",
        stm.len()
    );
    out.push_str("Summaries (oldest first):\n");
    for (i, e) in stm.iter().enumerate() {
        let _ = writeln!(out, "{}. {} (confidence={:.4})", i + 1, one_line(&e.summary), e.confidence);
    }
    let _ = write!(
        out,
        "Reply with plain text only, at most {MERGED_SUMMARY_MAX_WORDS} words."
    );
    Ok(out)
}
