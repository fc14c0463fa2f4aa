//! CSV ingestion, min-max normalization and dataset splitting for
//! UNSW-NB15-style flow logs.

mod normalize;
mod record;
pub mod schema;
mod split;

pub use normalize::{
    fit_columns, fit_normalizer, normalize, normalize_all, normalize_features, LabeledInstance,
    MinMax, NormalizationStats,
};
pub use record::{csv_has_labels, parse_csv, parse_csv_with, parse_reader, CsvOptions, FieldValue, RawLogRecord};
pub use schema::AttackCategory;
pub use split::{split_dataset, train_len, DEFAULT_TRAIN_FRACTION};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed csv: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity { line: u64, expected: usize, found: usize },
    #[error("line {line}: column {column}: cannot parse {value:?} as a number")]
    Numeric { line: u64, column: String, value: String },
    #[error("line {line}: unknown attack category {value:?}")]
    Category { line: u64, value: String },
    #[error("line {line}: label must be 0 or 1, got {value:?}")]
    Label { line: u64, value: String },
    #[error("line {line}: label {label} contradicts category {category}")]
    LabelCategoryMismatch { line: u64, label: u8, category: AttackCategory },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: u64, id: u64 },
    #[error("header is missing required column {0:?}")]
    MissingColumn(String),
    #[error("header names column {0:?} more than once")]
    DuplicateColumn(String),
    #[error("record {id}: missing feature {feature:?}")]
    MissingFeature { id: u64, feature: String },
    #[error("record {id} has no label")]
    Unlabeled { id: u64 },
    #[error("feature {feature:?}: min {min} exceeds max {max}")]
    InvalidRange { feature: String, min: f64, max: f64 },
    #[error("no data rows")]
    EmptyInput,
    #[error("no known numeric feature columns in input")]
    NoFeatures,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
