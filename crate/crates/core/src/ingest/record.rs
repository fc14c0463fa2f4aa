use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use indexmap::IndexMap;
use serde_json::{Map, Number, Value};

use super::schema::{
    self, AttackCategory, ATTACK_CAT_COLUMN, CATEGORICAL_COLUMNS, ID_COLUMN, LABEL_COLUMN,
};
use super::IngestError;

/// One cell of a parsed log row.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Number(f64),
    Text(String),
}

/// A single flow row as read from CSV, before normalization.
///
/// Columns keep their file order so the record can be rendered back into a
/// prompt exactly as observed. Schema feature columns are parsed as numbers;
/// categorical and unknown columns stay as text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLogRecord {
    pub id: u64,
    pub fields: IndexMap<String, FieldValue>,
    pub attack_cat: Option<AttackCategory>,
    pub label: Option<u8>,
}

impl RawLogRecord {
    pub fn numeric(&self, name: &str) -> Option<f64> {
        match self.fields.get(name)? {
            FieldValue::Number(v) => Some(*v),
            FieldValue::Text(_) => None,
        }
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        match self.fields.get(name)? {
            FieldValue::Text(s) => Some(s),
            FieldValue::Number(_) => None,
        }
    }

    /// JSON object with every observed field (labels excluded), `id` first.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert(ID_COLUMN.to_string(), Value::from(self.id));
        for (name, value) in &self.fields {
            let v = match value {
                FieldValue::Text(s) => Value::String(s.clone()),
                FieldValue::Number(x) => number_value(*x),
            };
            map.insert(name.clone(), v);
        }
        Value::Object(map)
    }

    /// Compact JSON rendering used for prompts and embeddings.
    pub fn render(&self) -> String {
        self.to_json().to_string()
    }
}

fn number_value(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        Value::from(x as i64)
    } else {
        Number::from_f64(x).map_or(Value::Null, Value::Number)
    }
}

/// Options controlling how CSV columns are interpreted.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Parse `attack_cat` and `label`. When false those columns are dropped.
    pub has_labels: bool,
    /// Source header name -> canonical schema name.
    pub column_map: BTreeMap<String, String>,
    /// Stop after this many data rows.
    pub limit: Option<usize>,
}

impl CsvOptions {
    pub fn labeled() -> Self {
        Self {
            has_labels: true,
            ..Self::default()
        }
    }

    pub fn unlabeled() -> Self {
        Self::default()
    }
}

/// Parse a UNSW-NB15-style CSV file.
pub fn parse_csv(path: &Path, has_labels: bool) -> Result<Vec<RawLogRecord>, IngestError> {
    parse_csv_with(
        path,
        &CsvOptions {
            has_labels,
            ..CsvOptions::default()
        },
    )
}

pub fn parse_csv_with(path: &Path, opts: &CsvOptions) -> Result<Vec<RawLogRecord>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_reader(file, opts)
}

/// True when the header of `path` carries both label columns.
pub fn csv_has_labels(path: &Path, column_map: &BTreeMap<String, String>) -> Result<bool, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv { line: 1, message: e.to_string() })?;
    let names: Vec<String> = headers.iter().map(|h| canonical(h, column_map)).collect();
    Ok(names.iter().any(|n| n == LABEL_COLUMN) && names.iter().any(|n| n == ATTACK_CAT_COLUMN))
}

fn canonical(header: &str, column_map: &BTreeMap<String, String>) -> String {
    let trimmed = header.trim();
    column_map
        .get(trimmed)
        .cloned()
        .unwrap_or_else(|| trimmed.to_string())
}

enum ColumnKind {
    Id,
    Label,
    AttackCat,
    Numeric,
    Text,
    Skip,
}

pub fn parse_reader<R: Read>(input: R, opts: &CsvOptions) -> Result<Vec<RawLogRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(input);

    let names: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Csv { line: 1, message: e.to_string() })?
        .iter()
        .map(|h| canonical(h, &opts.column_map))
        .collect();
    if names.len() == 1 && names[0].is_empty() {
        return Err(IngestError::MissingColumn(ID_COLUMN.to_string()));
    }

    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(IngestError::DuplicateColumn(n.clone()));
        }
    }
    if !seen.contains(ID_COLUMN) {
        return Err(IngestError::MissingColumn(ID_COLUMN.to_string()));
    }
    if opts.has_labels {
        for required in [LABEL_COLUMN, ATTACK_CAT_COLUMN] {
            if !seen.contains(required) {
                return Err(IngestError::MissingColumn(required.to_string()));
            }
        }
    }

    let kinds: Vec<ColumnKind> = names
        .iter()
        .map(|n| match n.as_str() {
            ID_COLUMN => ColumnKind::Id,
            LABEL_COLUMN if opts.has_labels => ColumnKind::Label,
            ATTACK_CAT_COLUMN if opts.has_labels => ColumnKind::AttackCat,
            LABEL_COLUMN | ATTACK_CAT_COLUMN => ColumnKind::Skip,
            n if schema::is_numeric_feature(n) => ColumnKind::Numeric,
            n if CATEGORICAL_COLUMNS.contains(&n) => ColumnKind::Text,
            _ => ColumnKind::Text,
        })
        .collect();

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut row = csv::StringRecord::new();
    loop {
        if opts.limit.is_some_and(|l| records.len() >= l) {
            break;
        }
        let more = reader.read_record(&mut row).map_err(|e| IngestError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if row.len() != names.len() {
            return Err(IngestError::Arity {
                line,
                expected: names.len(),
                found: row.len(),
            });
        }

        let mut id = None;
        let mut label = None;
        let mut attack_cat = None;
        let mut fields = IndexMap::with_capacity(names.len());
        for ((name, kind), raw) in names.iter().zip(&kinds).zip(row.iter()) {
            let cell = raw.trim();
            match kind {
                ColumnKind::Id => {
                    id = Some(cell.parse::<u64>().map_err(|_| IngestError::Numeric {
                        line,
                        column: name.clone(),
                        value: cell.to_string(),
                    })?);
                }
                ColumnKind::Label => {
                    label = Some(match cell {
                        "0" => 0u8,
                        "1" => 1u8,
                        _ => {
                            return Err(IngestError::Label {
                                line,
                                value: cell.to_string(),
                            })
                        }
                    });
                }
                ColumnKind::AttackCat => {
                    let cat = cell.parse::<AttackCategory>().map_err(|_| IngestError::Category {
                        line,
                        value: cell.to_string(),
                    })?;
                    attack_cat = Some(cat);
                }
                ColumnKind::Numeric => {
                    let v = cell
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| IngestError::Numeric {
                            line,
                            column: name.clone(),
                            value: cell.to_string(),
                        })?;
                    fields.insert(name.clone(), FieldValue::Number(v));
                }
                ColumnKind::Text => {
                    fields.insert(name.clone(), FieldValue::Text(cell.to_string()));
                }
                ColumnKind::Skip => {}
            }
        }

        let id = id.expect("id column checked above");
        if let (Some(l), Some(c)) = (label, attack_cat) {
            if l != c.label() {
                return Err(IngestError::LabelCategoryMismatch { line, label: l, category: c });
            }
        }
        if !ids.insert(id) {
            return Err(IngestError::DuplicateId { line, id });
        }
        records.push(RawLogRecord {
            id,
            fields,
            attack_cat,
            label,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,dur,proto,service,state,spkts,sbytes,attack_cat,label";

    fn parse(text: &str) -> Result<Vec<RawLogRecord>, IngestError> {
        parse_reader(text.as_bytes(), &CsvOptions::labeled())
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse(&format!("{HEADER}\n")).unwrap().is_empty());
    }

    #[test]
    fn rows_keep_file_order() {
        let text = format!(
            "{HEADER}\n3,0.1,tcp,-,FIN,6,258,Normal,0\n1,0.2,udp,dns,INT,2,114,Generic,1\n2,0,tcp,http,FIN,10,800,DoS,1\n"
        );
        let recs = parse(&text).unwrap();
        assert_eq!(recs.iter().map(|r| r.id).collect::<Vec<_>>(), vec![3, 1, 2]);
        assert_eq!(recs[1].attack_cat, Some(AttackCategory::Generic));
        assert_eq!(recs[1].numeric("sbytes"), Some(114.0));
        assert_eq!(recs[1].text("service"), Some("dns"));
    }

    #[test]
    fn unknown_category_names_the_row() {
        let text = format!("{HEADER}\n1,0.1,tcp,-,FIN,6,258,Normal,0\n2,0.1,tcp,-,FIN,6,258,Trojan,1\n");
        match parse(&text) {
            Err(IngestError::Category { line, value }) => {
                assert_eq!(line, 3);
                assert_eq!(value, "Trojan");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_arity_and_bad_number() {
        let text = format!("{HEADER}\n1,0.1,tcp,-,FIN,6\n");
        assert!(matches!(parse(&text), Err(IngestError::Arity { line: 2, expected: 9, found: 6 })));
        let text = format!("{HEADER}\n1,abc,tcp,-,FIN,6,258,Normal,0\n");
        assert!(matches!(parse(&text), Err(IngestError::Numeric { line: 2, .. })));
    }

    #[test]
    fn label_category_must_agree() {
        let text = format!("{HEADER}\n1,0.1,tcp,-,FIN,6,258,Normal,1\n");
        assert!(matches!(parse(&text), Err(IngestError::LabelCategoryMismatch { .. })));
        let text = format!("{HEADER}\n1,0.1,tcp,-,FIN,6,258,Normal,2\n");
        assert!(matches!(parse(&text), Err(IngestError::Label { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{HEADER}\n1,0.1,tcp,-,FIN,6,258,Normal,0\n1,0.1,tcp,-,FIN,6,258,Normal,0\n");
        assert!(matches!(parse(&text), Err(IngestError::DuplicateId { id: 1, .. })));
    }

    #[test]
    fn unlabeled_mode_drops_label_columns() {
        let text = format!("{HEADER}\n1,0.1,tcp,-,FIN,6,258,Trojan,7\n");
        let recs = parse_reader(text.as_bytes(), &CsvOptions::unlabeled()).unwrap();
        assert_eq!(recs[0].label, None);
        assert!(!recs[0].fields.contains_key("attack_cat"));
    }

    #[test]
    fn unknown_columns_are_opaque_text() {
        let text = "id,dur,srcip,label,attack_cat\n5,1.5,10.0.0.1,0,Normal\n";
        let recs = parse(text).unwrap();
        assert_eq!(recs[0].text("srcip"), Some("10.0.0.1"));
        assert_eq!(
            recs[0].render(),
            r#"{"id":5,"dur":1.5,"srcip":"10.0.0.1"}"#
        );
    }

    #[test]
    fn column_map_renames() {
        let text = "flow_id,duration,Label,attack_cat\n5,1.5,0,Normal\n";
        let mut opts = CsvOptions::labeled();
        opts.column_map.insert("flow_id".into(), "id".into());
        opts.column_map.insert("duration".into(), "dur".into());
        opts.column_map.insert("Label".into(), "label".into());
        let recs = parse_reader(text.as_bytes(), &opts).unwrap();
        assert_eq!(recs[0].id, 5);
        assert_eq!(recs[0].numeric("dur"), Some(1.5));
    }

    #[test]
    fn missing_id_column() {
        assert!(matches!(
            parse("dur,label,attack_cat\n1,0,Normal\n"),
            Err(IngestError::MissingColumn(c)) if c == "id"
        ));
    }
}
