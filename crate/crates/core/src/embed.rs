//! Text embeddings and cosine similarity.
//!
//! The default [`HashedEmbedder`] is a deterministic signed feature-hashing
//! projection of lowercase unigrams and adjacent bigrams into 512 buckets.
//! [`RemoteEmbedder`] forwards texts to an HTTP model server instead.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::{xxh3_64, xxh3_64_with_seed};

use crate::http::{HttpTransport, ReqwestTransport};

pub const EMBED_DIM: usize = 512;

/// Seed of the token hash. Changing it changes every stored vector, so it
/// is tied to the provider id below.
const TOKEN_HASH_SEED: u64 = 0x5EED_0001;

pub const HASHED_PROVIDER_ID: &str = "hashed-unigram-bigram-512/v1";

#[derive(Debug, Clone, thiserror::Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding endpoint not configured: set {0}")]
    MissingEndpoint(String),
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("embedding response malformed: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
    /// xxh3-64 hex digest of the embedded text.
    pub source_text_hash: String,
}

impl EmbeddingVector {
    pub fn zero(provider_id: &str, text: &str) -> Self {
        EmbeddingVector {
            values: vec![0.0; EMBED_DIM],
            provider_id: provider_id.to_string(),
            source_text_hash: text_hash(text),
        }
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub fn text_hash(text: &str) -> String {
    format!("{:016x}", xxh3_64(text.as_bytes()))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit length in place; leaves a zero vector alone.
fn normalize(v: &mut [f64]) {
    let n = l2_norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub trait Embedder: Send + Sync {
    fn provider_id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Bucket in `[0, 512)` and sign for one hashed feature: the low 9 bits
/// pick the bucket, the top bit the sign.
pub fn hash_feature(feature: &str) -> (usize, f64) {
    let h = xxh3_64_with_seed(feature.as_bytes(), TOKEN_HASH_SEED);
    let bucket = (h % EMBED_DIM as u64) as usize;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (bucket, sign)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashedEmbedder;

impl HashedEmbedder {
    /// Un-normalized accumulation; exposed for scale checks.
    pub fn raw(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut v = vec![0.0; EMBED_DIM];
        for t in &tokens {
            let (b, s) = hash_feature(t);
            v[b] += s;
        }
        // tokens never contain spaces, so bigram keys cannot collide with unigrams
        for w in tokens.windows(2) {
            let (b, s) = hash_feature(&format!("{} {}", w[0], w[1]));
            v[b] += s;
        }
        v
    }
}

impl Embedder for HashedEmbedder {
    fn provider_id(&self) -> &str {
        HASHED_PROVIDER_ID
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut values = self.raw(text);
        normalize(&mut values);
        Ok(EmbeddingVector {
            values,
            provider_id: HASHED_PROVIDER_ID.to_string(),
            source_text_hash: text_hash(text),
        })
    }
}

/// Client for a model server speaking
/// `POST {endpoint}` `{"texts": [...]}` -> `{"vectors": [[512 floats], ...]}`.
pub struct RemoteEmbedder {
    endpoint: String,
    provider_id: String,
    transport: Box<dyn HttpTransport>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    /// `base` is the server root; requests go to `{base}/embed`.
    pub fn new(base: &str, transport: Box<dyn HttpTransport>) -> Self {
        let endpoint = format!("{}/embed", base.trim_end_matches('/'));
        RemoteEmbedder {
            provider_id: format!("remote:{endpoint}"),
            endpoint,
            transport,
        }
    }

    pub fn from_env(var: &str) -> Result<Self, EmbedError> {
        let base = std::env::var(var)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .ok_or_else(|| EmbedError::MissingEndpoint(var.to_string()))?;
        let transport = ReqwestTransport::new(Duration::from_secs(60))
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(Self::new(&base, Box::new(transport)))
    }
}

impl Embedder for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = serde_json::json!({ "texts": texts });
        let resp = self
            .transport
            .post_json(&self.endpoint, &body)
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !resp.is_success() {
            return Err(EmbedError::Transport(format!("HTTP {}", resp.status)));
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&resp.body).map_err(|e| EmbedError::Shape(e.to_string()))?;
        if parsed.vectors.len() != texts.len() {
            return Err(EmbedError::Shape(format!(
                "expected {} vectors, got {}",
                texts.len(),
                parsed.vectors.len()
            )));
        }
        parsed
            .vectors
            .into_iter()
            .zip(texts)
            .map(|(mut values, text)| {
                if values.len() != EMBED_DIM {
                    return Err(EmbedError::Shape(format!(
                        "expected {EMBED_DIM} floats, got {}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(EmbedError::Shape("non-finite component".into()));
                }
                normalize(&mut values);
                Ok(EmbeddingVector {
                    values,
                    provider_id: self.provider_id.clone(),
                    source_text_hash: text_hash(text),
                })
            })
            .collect()
    }
}

/// `dot(a, b) / (|a| |b|)`, or 0 when either vector is zero.
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    cosine_slices(&a.values, &b.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{HttpResponse, TransportFailure};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(t: &str) -> EmbeddingVector {
        HashedEmbedder.embed(t).unwrap()
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = e("");
        assert_eq!(v.values.len(), EMBED_DIM);
        assert!(v.is_zero());
        assert!(e("  ,.;  ").is_zero());
    }

    #[test]
    fn deterministic_and_unit_length() {
        let a = e("Time management tips for busy people");
        assert_eq!(a, e("Time management tips for busy people"));
        assert!((a.norm() - 1.0).abs() <= 1e-9);
        assert_eq!(a.provider_id, HASHED_PROVIDER_ID);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        assert_eq!(e("Time-Management!").values, e("time management").values);
    }

    #[test]
    fn overlap_ranks_above_unrelated() {
        let target = e("time management");
        let near = cosine(&e("time management tips"), &target).unwrap();
        let far = cosine(&e("excel interview questions"), &target).unwrap();
        assert!(near > far, "{near} <= {far}");
    }

    #[test]
    fn self_similarity_and_zero_convention() {
        let v = e("interview scheduling");
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() <= 1e-9);
        assert_eq!(cosine(&e(""), &v).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_tokens_in_distinct_buckets_are_orthogonal() {
        // pick two tokens that land in different buckets
        let words = ["excel", "pallet", "forklift", "budget", "typing", "wiring"];
        let (a, b) = words
            .iter()
            .flat_map(|a| words.iter().map(move |b| (*a, *b)))
            .find(|(a, b)| a != b && hash_feature(a).0 != hash_feature(b).0)
            .unwrap();
        assert_eq!(cosine(&e(a), &e(b)).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            cosine_slices(&[1.0, 0.0], &[1.0]),
            Err(EmbedError::DimensionMismatch { left: 2, right: 1 })
        ));
    }

    #[test]
    fn adding_a_shared_token_rarely_lowers_similarity() {
        let vocab: Vec<String> = (0..400).map(|i| format!("w{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 1000;
        let mut ok = 0;
        for _ in 0..trials {
            let pick = |rng: &mut ChaCha8Rng| {
                let n = rng.gen_range(2..8);
                vocab.choose_multiple(rng, n).cloned().collect::<Vec<_>>()
            };
            let a = pick(&mut rng);
            let b = pick(&mut rng);
            let shared = loop {
                let w = vocab.choose(&mut rng).unwrap();
                if !a.contains(w) && !b.contains(w) {
                    break w.clone();
                }
            };
            let before = cosine(&e(&a.join(" ")), &e(&b.join(" "))).unwrap();
            let after = cosine(
                &e(&format!("{} {shared}", a.join(" "))),
                &e(&format!("{} {shared}", b.join(" "))),
            )
            .unwrap();
            if after >= before - 1e-12 {
                ok += 1;
            }
        }
        assert!(ok * 100 >= trials * 99, "only {ok}/{trials} compliant");
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
            let (x, y) = (e(&a), e(&b));
            prop_assert_eq!(cosine(&x, &y).unwrap(), cosine(&y, &x).unwrap());
        }

        #[test]
        fn cosine_is_scale_invariant(a in "[a-z ]{1,40}", b in "[a-z ]{1,40}", k in 0.01f64..100.0) {
            let ra = HashedEmbedder.raw(&a);
            let rb = HashedEmbedder.raw(&b);
            let scaled: Vec<f64> = rb.iter().map(|v| v * k).collect();
            let c1 = cosine_slices(&ra, &rb).unwrap();
            let c2 = cosine_slices(&ra, &scaled).unwrap();
            prop_assert!((c1 - c2).abs() <= 1e-9);
        }

        #[test]
        fn norm_is_zero_or_one(t in "[a-zA-Z0-9 ,.]{0,60}") {
            let n = e(&t).norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-9);
        }
    }

    struct FixedReply(u16, String);

    impl HttpTransport for FixedReply {
        fn get(&self, _: &str, _: &[(String, String)]) -> Result<HttpResponse, TransportFailure> {
            unreachable!()
        }
        fn post_json(&self, url: &str, body: &serde_json::Value) -> Result<HttpResponse, TransportFailure> {
            assert!(url.ends_with("/embed"));
            assert!(body["texts"].is_array());
            Ok(HttpResponse { status: self.0, body: self.1.clone() })
        }
    }

    #[test]
    fn remote_vectors_are_normalized() {
        let mut v = vec![0.0; EMBED_DIM];
        v[3] = 2.0;
        let body = serde_json::json!({ "vectors": [v] }).to_string();
        let emb = RemoteEmbedder::new("http://model/", Box::new(FixedReply(200, body)));
        let out = emb.embed("x").unwrap();
        assert_eq!(out.values[3], 1.0);
        assert_eq!(emb.provider_id(), "remote:http://model/embed");
    }

    #[test]
    fn remote_wrong_dimension_is_terminal() {
        let body = serde_json::json!({ "vectors": [[1.0, 2.0]] }).to_string();
        let emb = RemoteEmbedder::new("http://model", Box::new(FixedReply(200, body)));
        assert!(matches!(emb.embed("x"), Err(EmbedError::Shape(_))));
        let emb = RemoteEmbedder::new("http://model", Box::new(FixedReply(502, String::new())));
        assert!(matches!(emb.embed("x"), Err(EmbedError::Transport(_))));
    }

    #[test]
    fn shuffled_words_change_bigrams_only() {
        let mut words = ["alpha", "beta", "gamma", "delta"];
        let a = e(&words.join(" "));
        words.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let b = e(&words.join(" "));
        let c = cosine(&a, &b).unwrap();
        assert!(c > 0.0 && c <= 1.0);
    }
}
