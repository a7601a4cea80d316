//! Text embeddings and cosine similarity.

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding endpoint: {0}")]
    Remote(String),
}

/// Unit-length vector, or all zeros for text without tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    /// Scale `values` to unit length; a zero input stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = l2(&values);
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2(&self.values)
    }

    /// Zero vectors carry no direction and are left out of clustering.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a·b / (‖a‖‖b‖)`, clamped to [-1, 1]. Exactly symmetric.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Hermetic feature-hashing embedder: term frequencies in `dim` buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM, seed: 0 }
    }
}

impl HashEmbedder {
    /// FNV-1a over the token bytes, seeded through the offset basis.
    pub fn bucket(&self, token: &str) -> usize {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in token.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        (h % self.dim as u64) as usize
    }

    /// Term-frequency counts before normalization.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for t in tokenize(text) {
            v[self.bucket(&t)] += 1.0;
        }
        v
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        EmbeddingVector::normalized(self.counts(text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteEmbedderConfig {
    /// Full URL of the embeddings route, e.g. `http://localhost:8000/v1/embeddings`.
    pub url: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        Self {
            url: "http://localhost:8000/v1/embeddings".into(),
            model: "all-MiniLM-L6-v2".into(),
            timeout_ms: 30_000,
            max_retries: 2,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

pub struct RemoteEmbedder {
    agent: ureq::Agent,
    config: RemoteEmbedderConfig,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(true)
            .build()
            .into();
        Self { agent, config }
    }

    fn request(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = serde_json::json!({ "model": self.config.model, "input": [text] });
        let mut resp = self
            .agent
            .post(&self.config.url)
            .send_json(&body)
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        let parsed: EmbeddingResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Remote(format!("bad response body: {e}")))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| EmbedError::Remote("response has no data[0].embedding".into()))
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if tokenize(text).next().is_none() {
            return Ok(EmbeddingVector { values: Vec::new() });
        }
        let mut last = None;
        for _ in 0..=self.config.max_retries {
            match self.request(text) {
                Ok(v) => return Ok(EmbeddingVector::normalized(v)),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

pub enum Embedder {
    Hash(HashEmbedder),
    Remote(RemoteEmbedder),
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder::Hash(HashEmbedder::default())
    }
}

impl Embedder {
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        match self {
            Embedder::Hash(h) => Ok(h.embed(text)),
            Embedder::Remote(r) => r.embed(text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_zero() {
        let v = HashEmbedder::default().embed("");
        assert_eq!(v.dim(), DEFAULT_DIM);
        assert!(v.is_zero());
        assert!(HashEmbedder::default().embed(" ,.! ").is_zero());
    }

    #[test]
    fn term_frequency_weights() {
        let e = HashEmbedder::default();
        let (a, b) = (e.bucket("a"), e.bucket("b"));
        assert_ne!(a, b);
        let v = e.embed("a a b");
        assert!((v.values[a] - 2.0 * v.values[b]).abs() < 1e-15);
        assert!((v.values[a] - 2.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((v.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tokenizer_lowercases_and_splits_punctuation() {
        let toks: Vec<_> = tokenize("I will imitate Rider-7, now!").collect();
        assert_eq!(toks, ["i", "will", "imitate", "rider", "7", "now"]);
    }

    #[test]
    fn seed_changes_buckets() {
        let a = HashEmbedder { dim: 384, seed: 1 };
        let b = HashEmbedder { dim: 384, seed: 2 };
        let words = ["orders", "dense", "imitate", "traffic", "route"];
        assert!(words.iter().any(|w| a.bucket(w) != b.bucket(w)));
    }

    #[test]
    fn cosine_analytic_cases() {
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        let mut e2 = vec![0.0; 8];
        e2[1] = 1.0;
        let mut diag = vec![0.0; 8];
        diag[0] = 1.0 / 2f64.sqrt();
        diag[1] = 1.0 / 2f64.sqrt();
        assert!((cosine_similarity(&e1, &e1).unwrap() - 1.0).abs() <= 1e-12);
        assert!(cosine_similarity(&e1, &e2).unwrap().abs() <= 1e-12);
        assert!((cosine_similarity(&diag, &e1).unwrap() - 2f64.sqrt() / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatch() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(EmbedError::ZeroVector));
        assert_eq!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(EmbedError::DimensionMismatch(1, 2))
        );
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded(
            a in prop::collection::vec(-10.0f64..10.0, 6),
            b in prop::collection::vec(-10.0f64..10.0, 6),
        ) {
            prop_assume!(a.iter().any(|&x| x != 0.0) && b.iter().any(|&x| x != 0.0));
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn embedding_independent_of_batch_order(texts in prop::collection::vec("[a-z ]{0,30}", 1..8)) {
            let e = HashEmbedder::default();
            let forward: Vec<_> = texts.iter().map(|t| e.embed(t)).collect();
            let backward: Vec<_> = texts.iter().rev().map(|t| e.embed(t)).collect();
            for (f, b) in forward.iter().zip(backward.iter().rev()) {
                prop_assert_eq!(f, b);
            }
        }

        #[test]
        fn nonempty_embeddings_are_unit(text in "[a-z]{1,8}( [a-z]{1,8}){0,10}") {
            let v = HashEmbedder::default().embed(&text);
            prop_assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }
}
