use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Identifier column.
pub const ID_COLUMN: &str = "id";
/// Free-text attack category column.
pub const ATTACK_CAT_COLUMN: &str = "attack_cat";
/// Binary label column.
pub const LABEL_COLUMN: &str = "label";

/// Categorical flow metadata carried as strings for prompt rendering.
pub const CATEGORICAL_COLUMNS: &[&str] = &["proto", "service", "state"];

/// Continuous flow features of the UNSW-NB15 training/testing partitions, in
/// published column order.
pub const CONTINUOUS_COLUMNS: &[&str] = &[
    "dur",
    "spkts",
    "dpkts",
    "sbytes",
    "dbytes",
    "rate",
    "sttl",
    "dttl",
    "sload",
    "dload",
    "sloss",
    "dloss",
    "sinpkt",
    "dinpkt",
    "sjit",
    "djit",
    "swin",
    "stcpb",
    "dtcpb",
    "dwin",
    "tcprtt",
    "synack",
    "ackdat",
    "smean",
    "dmean",
    "trans_depth",
    "response_body_len",
    "ct_srv_src",
    "ct_state_ttl",
    "ct_dst_ltm",
    "ct_src_dport_ltm",
    "ct_dst_sport_ltm",
    "ct_dst_src_ltm",
    "ct_ftp_cmd",
    "ct_flw_http_mthd",
    "ct_src_ltm",
    "ct_srv_dst",
];

/// Application-level indicator columns. Parsed as numbers and scored like the
/// continuous features.
pub const FLAG_COLUMNS: &[&str] = &["is_ftp_login", "is_sm_ips_ports"];

/// Returns true when `name` is a numeric feature column of the schema.
pub fn is_numeric_feature(name: &str) -> bool {
    CONTINUOUS_COLUMNS.contains(&name) || FLAG_COLUMNS.contains(&name)
}

/// All numeric feature columns in schema order.
pub fn numeric_feature_columns() -> impl Iterator<Item = &'static str> {
    CONTINUOUS_COLUMNS.iter().chain(FLAG_COLUMNS.iter()).copied()
}

/// Ground-truth traffic class: benign, or one of nine attack families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackCategory {
    Normal,
    Reconnaissance,
    Backdoor,
    DoS,
    Exploits,
    Analysis,
    Fuzzers,
    Shellcode,
    Worms,
    Generic,
}

impl AttackCategory {
    pub const ALL: [AttackCategory; 10] = [
        AttackCategory::Normal,
        AttackCategory::Reconnaissance,
        AttackCategory::Backdoor,
        AttackCategory::DoS,
        AttackCategory::Exploits,
        AttackCategory::Analysis,
        AttackCategory::Fuzzers,
        AttackCategory::Shellcode,
        AttackCategory::Worms,
        AttackCategory::Generic,
    ];

    /// The nine attack families, excluding `Normal`.
    pub fn attacks() -> &'static [AttackCategory] {
        &Self::ALL[1..]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttackCategory::Normal => "Normal",
            AttackCategory::Reconnaissance => "Reconnaissance",
            AttackCategory::Backdoor => "Backdoor",
            AttackCategory::DoS => "DoS",
            AttackCategory::Exploits => "Exploits",
            AttackCategory::Analysis => "Analysis",
            AttackCategory::Fuzzers => "Fuzzers",
            AttackCategory::Shellcode => "Shellcode",
            AttackCategory::Worms => "Worms",
            AttackCategory::Generic => "Generic",
        }
    }

    /// Binary label implied by the category.
    pub fn label(self) -> u8 {
        u8::from(self != AttackCategory::Normal)
    }

    pub fn is_attack(self) -> bool {
        self != AttackCategory::Normal
    }
}

impl fmt::Display for AttackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown attack category {0:?}")]
pub struct UnknownCategory(pub String);

impl FromStr for AttackCategory {
    type Err = UnknownCategory;

    /// Case-insensitive match on the ten canonical names; surrounding
    /// whitespace is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_ten_names() {
        for c in AttackCategory::ALL {
            assert_eq!(c.as_str().parse::<AttackCategory>().unwrap(), c);
        }
        assert_eq!(" dos ".parse::<AttackCategory>().unwrap(), AttackCategory::DoS);
    }

    #[test]
    fn rejects_other_names() {
        for bad in ["Trojan", "Backdoors", "", "attack"] {
            assert!(bad.parse::<AttackCategory>().is_err(), "{bad}");
        }
    }

    #[test]
    fn label_matches_normal() {
        for c in AttackCategory::ALL {
            assert_eq!(c.label() == 0, c == AttackCategory::Normal);
        }
        assert_eq!(AttackCategory::attacks().len(), 9);
    }

    #[test]
    fn schema_has_no_duplicate_columns() {
        let cols: Vec<_> = numeric_feature_columns().collect();
        let mut sorted = cols.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), cols.len());
        assert_eq!(cols.len(), 39);
    }
}
