use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::MemoryError;
use crate::http::{JsonClient, RetryPolicy};

/// Embedding width used by default, matching common MiniLM-class encoders.
pub const DEFAULT_DIMENSION: usize = 384;

/// Maps text to a unit-norm vector.
pub trait Embedder: Send + Sync {
    /// Stable identifier recorded in long-term memory snapshots.
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// True when equal inputs always produce equal outputs.
    fn is_deterministic(&self) -> bool;
    fn embed(&self, text: &str) -> Result<Vec<f32>, MemoryError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Splitmix64 finalizer; spreads FNV output before bucket and sign are taken.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Signed feature hashing over unigrams and adjacent bigrams.
///
/// Text is lowercased and split on non-alphanumeric characters. Each token and
/// each adjacent pair hashes to a bucket with a +1/-1 sign. The accumulated
/// vector is L2-normalized; if every bucket cancels to zero the result is the
/// first basis vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    id: String,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            id: format!("feature-hash-fnv1a-{dimension}"),
        }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let lowered = text.to_lowercase();
        let tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();

        let mut acc = vec![0.0f64; self.dimension];
        let mut add = |key: &[u8]| {
            let h = mix(fnv1a(key));
            let bucket = (h % self.dimension as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        for t in &tokens {
            add(t.as_bytes());
        }
        let mut pair = Vec::new();
        for w in tokens.windows(2) {
            pair.clear();
            pair.extend_from_slice(w[0].as_bytes());
            pair.push(b' ');
            pair.extend_from_slice(w[1].as_bytes());
            add(&pair);
        }
        unit_or_basis(&acc)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, MemoryError> {
        Ok(self.embed_text(text))
    }
}

/// Scale to unit length, or return e0 for the zero vector.
pub fn unit_or_basis(v: &[f64]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        let mut e0 = vec![0.0f32; v.len()];
        if let Some(first) = e0.first_mut() {
            *first = 1.0;
        }
        return e0;
    }
    v.iter().map(|x| (x / norm) as f32).collect()
}

/// Euclidean norm accumulated in f64.
pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Inner product accumulated in f64, in index order.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    /// Environment variable holding a bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

fn default_timeout_secs() -> u64 {
    30
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedding service reached over HTTP: `POST {texts: [...]}` answered by
/// `{vectors: [[...]]}`. Returned vectors are re-normalized.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    cfg: RemoteEmbedderConfig,
    client: JsonClient,
    id: String,
}

impl RemoteEmbedder {
    pub fn new(cfg: RemoteEmbedderConfig) -> Self {
        let client = JsonClient::new(Duration::from_secs(cfg.timeout_secs), cfg.retry.clone());
        let id = format!("remote:{}", cfg.url);
        Self { cfg, client, id }
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, MemoryError> {
        let body = serde_json::to_string(&EmbedRequest { texts })?;
        let token = self
            .cfg
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        let text = self
            .client
            .post(&self.cfg.url, token.as_deref(), &body)
            .map_err(|e| MemoryError::Embedding(e.to_string()))?;
        let resp: EmbedResponse = serde_json::from_str(&text)
            .map_err(|e| MemoryError::Embedding(format!("malformed embedding response: {e}")))?;
        if resp.vectors.len() != texts.len() {
            return Err(MemoryError::Embedding(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.cfg.dimension {
                    return Err(MemoryError::DimensionMismatch {
                        expected: self.cfg.dimension,
                        found: v.len(),
                    });
                }
                Ok(unit_or_basis(&v))
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.cfg.dimension
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, MemoryError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.pop().expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic() {
        let e = HashEmbedder::default();
        assert_eq!(e.embed_text("syn flood from 10.0.0.1"), e.embed_text("syn flood from 10.0.0.1"));
        assert_eq!(e.dimension(), 384);
    }

    #[test]
    fn self_and_cross_similarity() {
        let e = HashEmbedder::default();
        let a = e.embed_text("dos flood attack");
        let b = e.embed_text("benign dns lookup");
        assert!((dot(&a, &a) - 1.0).abs() < 1e-6);
        assert!(dot(&a, &b) < 1.0);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let e = HashEmbedder::default();
        assert_eq!(e.embed_text("DoS, Flood!"), e.embed_text("dos flood"));
    }

    #[test]
    fn empty_text_is_basis() {
        let v = HashEmbedder::default().embed_text("  ,;  ");
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x8594_4171_f739_67e8);
    }

    proptest! {
        #[test]
        fn always_unit_norm(text in ".{0,200}") {
            let v = HashEmbedder::default().embed_text(&text);
            prop_assert_eq!(v.len(), 384);
            prop_assert!((l2_norm(&v) - 1.0).abs() <= 1e-6);
        }
    }
}
