use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ingest::schema::AttackCategory;

pub const SUMMARY_MAX_WORDS: usize = 50;
pub const RESPONSE_KEYS: [&str; 4] = ["id", "attack_cat", "label", "short_summary"];

/// The strict four-key analysis object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisResponse {
    pub id: u64,
    pub attack_cat: AttackCategory,
    pub label: u8,
    pub short_summary: String,
}

impl AnalysisResponse {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub response: AnalysisResponse,
    /// The summary exceeded the word limit and was cut.
    pub summary_truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseReason {
    NoJsonObject,
    InvalidJson,
    MissingKey,
    ExtraKey,
    InvalidId,
    IdMismatch,
    InvalidLabel,
    InvalidCategory,
    InvalidSummary,
    LabelCategoryContradiction,
}

impl ParseReason {
    pub fn code(self) -> &'static str {
        match self {
            ParseReason::NoJsonObject => "no_json_object",
            ParseReason::InvalidJson => "invalid_json",
            ParseReason::MissingKey => "missing_key",
            ParseReason::ExtraKey => "extra_key",
            ParseReason::InvalidId => "invalid_id",
            ParseReason::IdMismatch => "id_mismatch",
            ParseReason::InvalidLabel => "invalid_label",
            ParseReason::InvalidCategory => "invalid_category",
            ParseReason::InvalidSummary => "invalid_summary",
            ParseReason::LabelCategoryContradiction => "label_category_contradiction",
        }
    }
}

impl fmt::Display for ParseReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{reason}: {detail}")]
pub struct ParseFailure {
    pub reason: ParseReason,
    pub detail: String,
}

fn fail(reason: ParseReason, detail: impl Into<String>) -> ParseFailure {
    ParseFailure {
        reason,
        detail: detail.into(),
    }
}

/// The first balanced `{...}` span in `raw`, skipping braces inside JSON
/// string literals.
pub fn extract_json_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, ch) in raw[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// First `max_words` whitespace-separated words, and whether any were dropped.
pub fn truncate_words(text: &str, max_words: usize) -> (String, bool) {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_words {
        (text.trim().to_string(), false)
    } else {
        (words[..max_words].join(" "), true)
    }
}

/// Validate a model reply against the strict four-key schema.
pub fn parse_response(raw: &str, expected_id: u64) -> Result<ParsedResponse, ParseFailure> {
    let block = extract_json_object(raw)
        .ok_or_else(|| fail(ParseReason::NoJsonObject, "no balanced JSON object in reply"))?;
    let value: Value =
        serde_json::from_str(block).map_err(|e| fail(ParseReason::InvalidJson, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| fail(ParseReason::InvalidJson, "not an object"))?;

    for key in RESPONSE_KEYS {
        if !obj.contains_key(key) {
            return Err(fail(ParseReason::MissingKey, key));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !RESPONSE_KEYS.contains(&k.as_str())) {
        return Err(fail(ParseReason::ExtraKey, extra.clone()));
    }

    let id = obj["id"]
        .as_u64()
        .ok_or_else(|| fail(ParseReason::InvalidId, obj["id"].to_string()))?;
    if id != expected_id {
        return Err(fail(
            ParseReason::IdMismatch,
            format!("expected {expected_id}, got {id}"),
        ));
    }
    let label = match obj["label"].as_u64() {
        Some(0) => 0u8,
        Some(1) => 1u8,
        _ => return Err(fail(ParseReason::InvalidLabel, obj["label"].to_string())),
    };
    let attack_cat = obj["attack_cat"]
        .as_str()
        .and_then(|s| s.parse::<AttackCategory>().ok())
        .ok_or_else(|| fail(ParseReason::InvalidCategory, obj["attack_cat"].to_string()))?;
    let summary = obj["short_summary"]
        .as_str()
        .ok_or_else(|| fail(ParseReason::InvalidSummary, obj["short_summary"].to_string()))?;
    if label != attack_cat.label() {
        return Err(fail(
            ParseReason::LabelCategoryContradiction,
            format!("label {label} with category {attack_cat}"),
        ));
    }

    let (short_summary, summary_truncated) = truncate_words(summary, SUMMARY_MAX_WORDS);
    Ok(ParsedResponse {
        response: AnalysisResponse {
            id,
            attack_cat,
            label,
            short_summary,
        },
        summary_truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reason(raw: &str, id: u64) -> ParseReason {
        parse_response(raw, id).unwrap_err().reason
    }

    #[test]
    fn well_formed() {
        let p = parse_response(
            r#"{"id":7,"attack_cat":"DoS","label":1,"short_summary":"High-rate flood."}"#,
            7,
        )
        .unwrap();
        assert_eq!(p.response.attack_cat, AttackCategory::DoS);
        assert_eq!(p.response.label, 1);
        assert!(!p.summary_truncated);
    }

    #[test]
    fn contradiction() {
        assert_eq!(
            reason(r#"{"id":7,"attack_cat":"Normal","label":1,"short_summary":"x"}"#, 7),
            ParseReason::LabelCategoryContradiction
        );
    }

    #[test]
    fn prose_wrapped() {
        let raw = "Sure! Here is the analysis:\n```json\n{\"id\": 7, \"attack_cat\": \"Normal\", \"label\": 0, \"short_summary\": \"Benign {dns} lookup.\"}\n```\nLet me know.";
        let p = parse_response(raw, 7).unwrap();
        assert_eq!(p.response.short_summary, "Benign {dns} lookup.");
    }

    #[test]
    fn braces_inside_strings() {
        assert_eq!(
            extract_json_object(r#"x {"a":"}\"{","b":{"c":1}} y"#),
            Some(r#"{"a":"}\"{","b":{"c":1}}"#)
        );
        assert_eq!(extract_json_object("{ unterminated"), None);
    }

    #[test]
    fn failure_codes() {
        assert_eq!(reason("no json here", 1), ParseReason::NoJsonObject);
        assert_eq!(reason("{id: 1}", 1), ParseReason::InvalidJson);
        assert_eq!(reason(r#"{"id":1,"label":0,"short_summary":"x"}"#, 1), ParseReason::MissingKey);
        assert_eq!(
            reason(r#"{"id":1,"attack_cat":"Normal","label":0,"short_summary":"x","confidence":0.3}"#, 1),
            ParseReason::ExtraKey
        );
        assert_eq!(reason(r#"{"id":"1","attack_cat":"Normal","label":0,"short_summary":"x"}"#, 1), ParseReason::InvalidId);
        assert_eq!(reason(r#"{"id":2,"attack_cat":"Normal","label":0,"short_summary":"x"}"#, 1), ParseReason::IdMismatch);
        assert_eq!(reason(r#"{"id":1,"attack_cat":"Normal","label":2,"short_summary":"x"}"#, 1), ParseReason::InvalidLabel);
        assert_eq!(reason(r#"{"id":1,"attack_cat":"Trojan","label":1,"short_summary":"x"}"#, 1), ParseReason::InvalidCategory);
        assert_eq!(reason(r#"{"id":1,"attack_cat":"Normal","label":0,"short_summary":5}"#, 1), ParseReason::InvalidSummary);
    }

    #[test]
    fn long_summary_truncated() {
        let words: Vec<String> = (0..80).map(|i| format!("w{i}")).collect();
        let raw = serde_json::json!({"id": 3, "attack_cat": "Worms", "label": 1, "short_summary": words.join(" ")});
        let p = parse_response(&raw.to_string(), 3).unwrap();
        assert!(p.summary_truncated);
        assert_eq!(p.response.short_summary.split_whitespace().count(), 50);
        assert!(p.response.short_summary.ends_with("w49"));
    }

    proptest! {
        #[test]
        fn round_trip(id in any::<u64>(), cat in 0usize..10, summary in "[a-zA-Z0-9 .,{}\"]{0,120}") {
            let attack_cat = AttackCategory::ALL[cat];
            let (short_summary, _) = truncate_words(&summary, SUMMARY_MAX_WORDS);
            let resp = AnalysisResponse { id, attack_cat, label: attack_cat.label(), short_summary };
            let parsed = parse_response(&resp.to_json(), id).unwrap();
            prop_assert_eq!(parsed.response, resp);
        }
    }
}
