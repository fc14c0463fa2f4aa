use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::embed::{dot, l2_norm};
use super::MemoryError;

/// Allowed deviation of a stored vector's norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LtmEntry {
    pub id: u64,
    pub vector: Vec<f32>,
    pub summary: String,
    pub confidence: f64,
    pub source_ids: Vec<u64>,
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit<'a> {
    pub entry: &'a LtmEntry,
    pub similarity: f64,
}

/// Persistent store of embedded summaries with exact inner-product search.
///
/// Entries are unit vectors, so inner product equals cosine similarity.
/// Search scans every entry. With `max_entries` set, adding beyond the cap
/// evicts the oldest entries first.
#[derive(Debug, Clone, PartialEq)]
pub struct LtmStore {
    dimension: usize,
    embedder_id: String,
    entries: Vec<LtmEntry>,
    next_id: u64,
    max_entries: Option<usize>,
}

impl LtmStore {
    pub fn new(dimension: usize, embedder_id: impl Into<String>) -> Self {
        Self {
            dimension,
            embedder_id: embedder_id.into(),
            entries: Vec::new(),
            next_id: 0,
            max_entries: None,
        }
    }

    pub fn with_max_entries(mut self, max_entries: Option<usize>) -> Self {
        self.max_entries = max_entries;
        self.evict();
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LtmEntry] {
        &self.entries
    }

    pub fn get(&self, id: u64) -> Option<&LtmEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entries[i])
    }

    fn check_vector(&self, vector: &[f32]) -> Result<(), MemoryError> {
        if vector.len() != self.dimension {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        let norm = l2_norm(vector);
        if norm.is_nan() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(MemoryError::NotUnitNorm(norm));
        }
        Ok(())
    }

    /// Append an entry and return its id.
    pub fn add(
        &mut self,
        summary: impl Into<String>,
        confidence: f64,
        vector: Vec<f32>,
        source_ids: Vec<u64>,
        created_at: u64,
    ) -> Result<u64, MemoryError> {
        self.check_vector(&vector)?;
        if !confidence.is_finite() {
            return Err(MemoryError::InvalidConfidence(confidence));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.entries.push(LtmEntry {
            id,
            vector,
            summary: summary.into(),
            confidence,
            source_ids,
            created_at,
        });
        self.evict();
        Ok(id)
    }

    fn evict(&mut self) {
        if let Some(cap) = self.max_entries {
            if self.entries.len() > cap {
                let excess = self.entries.len() - cap;
                self.entries.drain(..excess);
            }
        }
    }

    /// Top `k` entries by similarity to `query`, highest first; equal
    /// similarities are ordered by ascending id.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit<'_>>, MemoryError> {
        self.check_vector(query)?;
        if k == 0 || self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (dot(&e.vector, query), i))
            .collect();
        // entries are stored in id order, so index order is id order
        let rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(rank);
        Ok(scored
            .into_iter()
            .map(|(similarity, i)| SearchHit {
                entry: &self.entries[i],
                similarity,
            })
            .collect())
    }

    pub fn to_snapshot(&self) -> LtmSnapshot {
        LtmSnapshot {
            dimension: self.dimension,
            count: self.entries.len(),
            embedder_id: self.embedder_id.clone(),
            next_id: self.next_id,
            entries: self
                .entries
                .iter()
                .map(|e| SnapshotEntry {
                    id: e.id,
                    vector: encode_vector(&e.vector),
                    summary: e.summary.clone(),
                    confidence: e.confidence,
                    source_ids: e.source_ids.clone(),
                    created_at: e.created_at,
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: LtmSnapshot) -> Result<Self, MemoryError> {
        if snap.count != snap.entries.len() {
            return Err(MemoryError::Snapshot(format!(
                "header count {} but {} entries",
                snap.count,
                snap.entries.len()
            )));
        }
        let mut store = Self::new(snap.dimension, snap.embedder_id);
        let mut last_id = None;
        for e in snap.entries {
            if last_id.is_some_and(|l| e.id <= l) {
                return Err(MemoryError::Snapshot(format!("entry ids not increasing at {}", e.id)));
            }
            last_id = Some(e.id);
            let vector = decode_vector(&e.vector)?;
            store.check_vector(&vector)?;
            store.entries.push(LtmEntry {
                id: e.id,
                vector,
                summary: e.summary,
                confidence: e.confidence,
                source_ids: e.source_ids,
                created_at: e.created_at,
            });
        }
        let min_next = last_id.map_or(0, |l| l + 1);
        if snap.next_id < min_next {
            return Err(MemoryError::Snapshot(format!(
                "next_id {} is not past the last entry id",
                snap.next_id
            )));
        }
        store.next_id = snap.next_id;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let text = serde_json::to_string(&self.to_snapshot())?;
        fs::write(path, text).map_err(|source| MemoryError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let text = fs::read_to_string(path).map_err(|source| MemoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_snapshot(serde_json::from_str(&text)?)
    }
}

/// On-disk form of the store. Vectors are base64 of little-endian f32.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtmSnapshot {
    pub dimension: usize,
    pub count: usize,
    pub embedder_id: String,
    pub next_id: u64,
    pub entries: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub id: u64,
    pub vector: String,
    pub summary: String,
    pub confidence: f64,
    pub source_ids: Vec<u64>,
    pub created_at: u64,
}

pub fn encode_vector(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_vector(s: &str) -> Result<Vec<f32>, MemoryError> {
    let bytes = B64
        .decode(s)
        .map_err(|e| MemoryError::Snapshot(format!("bad base64 vector: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(MemoryError::Snapshot(format!(
            "vector byte length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::embed::unit_or_basis;

    fn unit(v: &[f64]) -> Vec<f32> {
        unit_or_basis(v)
    }

    fn store3() -> LtmStore {
        let mut s = LtmStore::new(3, "test");
        s.add("a", 0.95, unit(&[1.0, 0.0, 0.0]), vec![1], 0).unwrap();
        s.add("b", 0.92, unit(&[0.0, 1.0, 0.0]), vec![2], 1).unwrap();
        s.add("c", 0.99, unit(&[1.0, 1.0, 0.0]), vec![3], 2).unwrap();
        s
    }

    #[test]
    fn add_assigns_increasing_ids() {
        let mut s = LtmStore::new(3, "test");
        let a = s.add("x", 0.9, unit(&[1.0, 0.0, 0.0]), vec![], 0).unwrap();
        assert_eq!(s.len(), 1);
        let b = s.add("y", 0.9, unit(&[0.0, 0.0, 1.0]), vec![], 0).unwrap();
        assert!(b > a);
    }

    #[test]
    fn rejects_bad_vectors() {
        let mut s = LtmStore::new(3, "test");
        assert!(matches!(
            s.add("x", 0.9, vec![1.0, 0.0], vec![], 0),
            Err(MemoryError::DimensionMismatch { expected: 3, found: 2 })
        ));
        assert!(matches!(
            s.add("x", 0.9, vec![1.0, 1.0, 0.0], vec![], 0),
            Err(MemoryError::NotUnitNorm(_))
        ));
    }

    #[test]
    fn self_match_first() {
        let s = store3();
        let hits = s.search(&unit(&[0.0, 1.0, 0.0]), 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].entry.summary, "b");
        assert!((hits[0].similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ties_broken_by_id() {
        let s = store3();
        let hits = s.search(&unit(&[0.0, 0.0, 1.0]), 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.entry.id).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn empty_store_and_zero_k() {
        let s = LtmStore::new(3, "test");
        assert!(s.search(&unit(&[1.0, 0.0, 0.0]), 10).unwrap().is_empty());
        assert!(store3().search(&unit(&[1.0, 0.0, 0.0]), 0).unwrap().is_empty());
    }

    #[test]
    fn eviction_drops_oldest() {
        let mut s = store3().with_max_entries(Some(2));
        assert_eq!(s.entries().iter().map(|e| e.id).collect::<Vec<_>>(), vec![1, 2]);
        let id = s.add("d", 0.9, unit(&[0.0, 0.0, 1.0]), vec![], 3).unwrap();
        assert_eq!(id, 3);
        assert_eq!(s.entries().iter().map(|e| e.id).collect::<Vec<_>>(), vec![2, 3]);
        assert!(s.get(1).is_none());
        assert_eq!(s.get(3).unwrap().summary, "d");
    }

    #[test]
    fn snapshot_round_trip() {
        let s = store3();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ltm.json");
        s.save(&path).unwrap();
        let back = LtmStore::load(&path).unwrap();
        assert_eq!(back, s);
        let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["dimension"], 3);
        assert_eq!(raw["count"], 3);
        assert_eq!(raw["embedder_id"], "test");
    }

    #[test]
    fn vector_encoding_is_little_endian_f32() {
        assert_eq!(encode_vector(&[1.0]), B64.encode([0x00, 0x00, 0x80, 0x3f]));
        assert_eq!(decode_vector(&encode_vector(&[0.25, -2.0])).unwrap(), vec![0.25, -2.0]);
        assert!(decode_vector(&B64.encode([1u8, 2, 3])).is_err());
    }

    #[test]
    fn corrupt_snapshot_rejected() {
        let mut snap = store3().to_snapshot();
        snap.count = 5;
        assert!(LtmStore::from_snapshot(snap).is_err());
        let mut snap = store3().to_snapshot();
        snap.next_id = 1;
        assert!(LtmStore::from_snapshot(snap).is_err());
    }
}
