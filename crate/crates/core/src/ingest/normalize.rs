use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::RawLogRecord;
use super::schema::{self, AttackCategory};
use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    /// Min-max scale `value` into [0, 1]. Out-of-range values clamp to the
    /// nearest bound; a degenerate range maps everything to 0.
    pub fn scale(&self, value: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0.0;
        }
        ((value - self.min) / span).clamp(0.0, 1.0)
    }
}

/// Per-feature extrema fitted on training data. Serialized as an ordered JSON
/// object `{feature: {min, max}}`; the order defines the feature vector layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizationStats {
    features: IndexMap<String, MinMax>,
}

/// A normalized training or evaluation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub id: u64,
    pub x: Vec<f64>,
    pub y: u8,
    pub category: AttackCategory,
}

impl NormalizationStats {
    /// Build from explicit `(name, min, max)` triples.
    pub fn from_ranges<I, S>(ranges: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = (S, f64, f64)>,
        S: Into<String>,
    {
        let mut features = IndexMap::new();
        for (name, min, max) in ranges {
            let name = name.into();
            if min.is_nan() || max.is_nan() || min > max {
                return Err(IngestError::InvalidRange { feature: name, min, max });
            }
            features.insert(name, MinMax { min, max });
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    pub fn range(&self, name: &str) -> Option<MinMax> {
        self.features.get(name).copied()
    }

    pub fn ranges(&self) -> impl Iterator<Item = (&str, MinMax)> {
        self.features.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Short stable digest of the serialized statistics. Models record it so a
    /// mismatched normalizer is caught at load time.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("stats serialize");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let stats: Self = serde_json::from_str(&text)?;
        for (name, r) in &stats.features {
            if r.min.is_nan() || r.max.is_nan() || r.min > r.max {
                return Err(IngestError::InvalidRange {
                    feature: name.clone(),
                    min: r.min,
                    max: r.max,
                });
            }
        }
        Ok(stats)
    }
}

/// Fit min/max over every schema feature column present in the first record.
pub fn fit_normalizer(data: &[RawLogRecord]) -> Result<NormalizationStats, IngestError> {
    let first = data.first().ok_or(IngestError::EmptyInput)?;
    let names: Vec<&str> = schema::numeric_feature_columns()
        .filter(|n| first.numeric(n).is_some())
        .collect();
    if names.is_empty() {
        return Err(IngestError::NoFeatures);
    }
    fit_columns(data, &names)
}

/// Fit min/max over the named columns, in the given order.
pub fn fit_columns(data: &[RawLogRecord], names: &[&str]) -> Result<NormalizationStats, IngestError> {
    if data.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut ranges: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); names.len()];
    for record in data {
        for (name, (lo, hi)) in names.iter().zip(ranges.iter_mut()) {
            let v = record.numeric(name).ok_or_else(|| IngestError::MissingFeature {
                id: record.id,
                feature: (*name).to_string(),
            })?;
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }
    NormalizationStats::from_ranges(names.iter().zip(ranges).map(|(n, (lo, hi))| (*n, lo, hi)))
}

/// Normalized feature vector for `record`, in the order of `stats`.
pub fn normalize_features(record: &RawLogRecord, stats: &NormalizationStats) -> Result<Vec<f64>, IngestError> {
    stats
        .features
        .iter()
        .map(|(name, range)| {
            record
                .numeric(name)
                .map(|v| range.scale(v))
                .ok_or_else(|| IngestError::MissingFeature {
                    id: record.id,
                    feature: name.clone(),
                })
        })
        .collect()
}

/// Normalize a labeled record. Unlabeled records are rejected.
pub fn normalize(record: &RawLogRecord, stats: &NormalizationStats) -> Result<LabeledInstance, IngestError> {
    let x = normalize_features(record, stats)?;
    let (y, category) = match (record.label, record.attack_cat) {
        (Some(y), Some(c)) => (y, c),
        _ => return Err(IngestError::Unlabeled { id: record.id }),
    };
    Ok(LabeledInstance {
        id: record.id,
        x,
        y,
        category,
    })
}

pub fn normalize_all(data: &[RawLogRecord], stats: &NormalizationStats) -> Result<Vec<LabeledInstance>, IngestError> {
    data.iter().map(|r| normalize(r, stats)).collect()
}
