//! Embedding producers: deterministic built-in encoders of tunable
//! expressivity, a remote HTTP embedding client, and an on-disk cache.
//!
//! Built-ins model the target embedding service under audit. `HashedBag` is
//! order-free (a bag of hashed token vectors); `PositionalMix` additionally
//! carries position-weighted structure and is strictly more informative at
//! equal dimension.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{fnv1a_parts, SplitMix64};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("empty text cannot be embedded")]
    EmptyText,
    #[error("text of {len} tokens refused: shorter than minimum query length {min}")]
    RefusedShortText { len: usize, min: usize },
    #[error("remote embedding service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid embedder config: {0}")]
    BadConfig(String),
}

/// Fixed-dimension real vector; the attack surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let na = self.l2_norm();
        let nb = other.l2_norm();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    HashedBag,
    PositionalMix,
    Remote,
}

/// Identity and knobs of the embedding model under audit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub seed: u64,
    /// Position decay in (0, 1]; positional_mix only.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Texts shorter than this many tokens are refused (guarded-target simulation).
    #[serde(default)]
    pub min_query_tokens: usize,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
    /// Bounded concurrent in-flight requests for the remote kind.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Texts per remote request.
    #[serde(default = "default_batch")]
    pub remote_batch_size: usize,
}

fn default_gamma() -> f64 {
    0.9
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    100
}
fn default_concurrency() -> usize {
    4
}
fn default_batch() -> usize {
    32
}

impl EmbedderConfig {
    pub fn hashed_bag(dim: usize, seed: u64) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::HashedBag,
            dim,
            seed,
            gamma: default_gamma(),
            min_query_tokens: 0,
            endpoint: None,
            max_retries: default_retries(),
            retry_backoff_ms: default_backoff(),
            concurrency: default_concurrency(),
            remote_batch_size: default_batch(),
        }
    }

    pub fn positional_mix(dim: usize, seed: u64) -> Self {
        EmbedderConfig { kind: EmbedderKind::PositionalMix, ..Self::hashed_bag(dim, seed) }
    }

    pub fn remote(endpoint: &str, dim: usize) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Remote,
            endpoint: Some(endpoint.to_string()),
            ..Self::hashed_bag(dim, 0)
        }
    }

    /// Stable identity hash; keys caches and dataset/checkpoint headers.
    pub fn fingerprint(&self) -> u64 {
        let kind = match self.kind {
            EmbedderKind::HashedBag => "hashed_bag",
            EmbedderKind::PositionalMix => "positional_mix",
            EmbedderKind::Remote => "remote",
        };
        let gamma = format!("{:.12}", self.gamma);
        let endpoint = self.endpoint.clone().unwrap_or_default();
        fnv1a_parts(&[
            kind.as_bytes(),
            &(self.dim as u64).to_le_bytes(),
            &self.seed.to_le_bytes(),
            gamma.as_bytes(),
            &(self.min_query_tokens as u64).to_le_bytes(),
            endpoint.as_bytes(),
        ])
    }
}

/// Per-element batch result: refusals are recorded, not fatal.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbedOutcome {
    Vector(EmbeddingVector),
    Refused,
}

impl EmbedOutcome {
    pub fn vector(&self) -> Option<&EmbeddingVector> {
        match self {
            EmbedOutcome::Vector(v) => Some(v),
            EmbedOutcome::Refused => None,
        }
    }
}

/// Immutable after construction; safe to share across threads.
pub struct Embedder {
    cfg: EmbedderConfig,
    client: Option<reqwest::blocking::Client>,
}

impl Embedder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self, EmbedError> {
        if cfg.dim < 2 {
            return Err(EmbedError::BadConfig(format!("dim must be >= 2 (got {})", cfg.dim)));
        }
        if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
            return Err(EmbedError::BadConfig(format!("gamma must be in (0,1] (got {})", cfg.gamma)));
        }
        let client = match cfg.kind {
            EmbedderKind::Remote => {
                if cfg.endpoint.is_none() {
                    return Err(EmbedError::BadConfig("remote kind requires an endpoint".into()));
                }
                Some(
                    reqwest::blocking::Client::builder()
                        .timeout(Duration::from_secs(30))
                        .build()
                        .map_err(|e| EmbedError::RemoteUnavailable(e.to_string()))?,
                )
            }
            _ => None,
        };
        Ok(Embedder { cfg, client })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    pub fn fingerprint(&self) -> u64 {
        self.cfg.fingerprint()
    }

    /// Embed one tokenized text. Deterministic given (tokens, config).
    pub fn embed(&self, tokens: &[String]) -> Result<EmbeddingVector, EmbedError> {
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        if tokens.len() < self.cfg.min_query_tokens {
            return Err(EmbedError::RefusedShortText {
                len: tokens.len(),
                min: self.cfg.min_query_tokens,
            });
        }
        match self.cfg.kind {
            EmbedderKind::HashedBag => Ok(self.hashed_bag(tokens, self.cfg.dim, "bag")),
            EmbedderKind::PositionalMix => Ok(self.positional_mix(tokens)),
            EmbedderKind::Remote => {
                let outcomes = self.remote_embed(&[tokens.join(" ")])?;
                match outcomes.into_iter().next() {
                    Some(EmbedOutcome::Vector(v)) => Ok(v),
                    Some(EmbedOutcome::Refused) => Err(EmbedError::RefusedShortText {
                        len: tokens.len(),
                        min: self.cfg.min_query_tokens,
                    }),
                    None => Err(EmbedError::RemoteUnavailable("empty response".into())),
                }
            }
        }
    }

    /// Element-wise embed; refusals recorded per element, the batch never
    /// aborts for short or empty texts.
    pub fn embed_batch(&self, texts: &[Vec<String>]) -> Result<Vec<EmbedOutcome>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        match self.cfg.kind {
            EmbedderKind::Remote => {
                let joined: Vec<String> = texts.iter().map(|t| t.join(" ")).collect();
                self.remote_embed(&joined)
            }
            _ => {
                use rayon::prelude::*;
                Ok(texts
                    .par_iter()
                    .map(|t| match self.embed(t) {
                        Ok(v) => EmbedOutcome::Vector(v),
                        Err(_) => EmbedOutcome::Refused,
                    })
                    .collect())
            }
        }
    }

    // -- built-in encoders --------------------------------------------------

    /// Pseudo-random sign pattern (+-1 entries), keyed by (seed, salt,
    /// token) through a SplitMix64 stream. Scaling to 1/sqrt(dim) happens at
    /// the use site.
    fn token_signs(&self, token: &str, dim: usize, salt: &str) -> Vec<f64> {
        let key = fnv1a_parts(&[&self.cfg.seed.to_le_bytes(), salt.as_bytes(), token.as_bytes()]);
        let mut g = SplitMix64::new(key);
        (0..dim).map(|_| g.next_sign()).collect()
    }

    /// Mean of per-token hash vectors, then L2-normalized. Order-free: the
    /// accumulation sums small integers, which is exact in f64, so every
    /// permutation of a token multiset produces the identical vector.
    fn hashed_bag(&self, tokens: &[String], dim: usize, salt: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; dim];
        for t in tokens {
            let v = self.token_signs(t, dim, salt);
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        let scale = 1.0 / (tokens.len() as f64 * (dim as f64).sqrt());
        for a in acc.iter_mut() {
            *a *= scale;
        }
        normalize(&mut acc);
        EmbeddingVector::new(acc)
    }

    /// First half a hashed bag; second half a gamma^i position-weighted sum.
    /// Order-sensitive and strictly more informative than the bag alone.
    fn positional_mix(&self, tokens: &[String]) -> EmbeddingVector {
        let dim = self.cfg.dim;
        let half = dim / 2;
        let rest = dim - half;
        let mut out = vec![0.0f64; dim];

        let bag = self.hashed_bag(tokens, half, "bag");
        out[..half].copy_from_slice(bag.values());

        let scale = 1.0 / (rest as f64).sqrt();
        let mut w = scale;
        for t in tokens {
            let v = self.token_signs(t, rest, "pos");
            for (o, x) in out[half..].iter_mut().zip(v) {
                *o += w * x;
            }
            w *= self.cfg.gamma;
        }
        normalize(&mut out);
        EmbeddingVector::new(out)
    }

    // -- remote client -------------------------------------------------------

    /// One logical batch against the wire protocol, chunked into requests of
    /// `remote_batch_size` with at most `concurrency` in flight. Per-text
    /// refusal is a JSON null; transport failures retry with exponential
    /// backoff before surfacing as `RemoteUnavailable`.
    pub fn remote_embed(&self, texts: &[String]) -> Result<Vec<EmbedOutcome>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let chunks: Vec<&[String]> = texts.chunks(self.cfg.remote_batch_size.max(1)).collect();
        let mut results: Vec<Option<Result<Vec<EmbedOutcome>, EmbedError>>> =
            (0..chunks.len()).map(|_| None).collect();
        let workers = self.cfg.concurrency.max(1).min(chunks.len());

        let next = std::sync::atomic::AtomicUsize::new(0);
        let shared = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= chunks.len() {
                        break;
                    }
                    let r = self.remote_request(chunks[i]);
                    shared.lock().unwrap()[i] = Some(r);
                });
            }
        });

        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r.expect("chunk not processed")?);
        }
        Ok(out)
    }

    fn remote_request(&self, texts: &[String]) -> Result<Vec<EmbedOutcome>, EmbedError> {
        let endpoint = self.cfg.endpoint.as_deref().expect("remote config validated");
        let url = format!("{}/embed", endpoint.trim_end_matches('/'));
        let client = self.client.as_ref().expect("remote config validated");
        let body = serde_json::json!({ "texts": texts });

        let mut last_err = String::new();
        for attempt in 0..self.cfg.max_retries.max(1) {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.cfg.retry_backoff_ms << (attempt - 1),
                ));
            }
            let mut req = client.post(&url).json(&body);
            if let Ok(key) = std::env::var("EMBINVERT_API_KEY") {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: RemoteResponse = resp
                        .json()
                        .map_err(|e| EmbedError::RemoteUnavailable(format!("bad response body: {e}")))?;
                    return self.validate_remote(texts.len(), parsed);
                }
                Ok(resp) => {
                    last_err = format!("status {}", resp.status());
                }
                Err(e) => {
                    last_err = e.to_string();
                }
            }
        }
        Err(EmbedError::RemoteUnavailable(last_err))
    }

    fn validate_remote(
        &self,
        expected_len: usize,
        parsed: RemoteResponse,
    ) -> Result<Vec<EmbedOutcome>, EmbedError> {
        if parsed.embeddings.len() != expected_len {
            return Err(EmbedError::RemoteUnavailable(format!(
                "response carried {} embeddings for {} texts",
                parsed.embeddings.len(),
                expected_len
            )));
        }
        let mut out = Vec::with_capacity(expected_len);
        for entry in parsed.embeddings {
            match entry {
                Some(values) => {
                    if values.len() != self.cfg.dim {
                        return Err(EmbedError::DimensionMismatch {
                            expected: self.cfg.dim,
                            got: values.len(),
                        });
                    }
                    out.push(EmbedOutcome::Vector(EmbeddingVector::new(values)));
                }
                None => out.push(EmbedOutcome::Refused),
            }
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct RemoteResponse {
    embeddings: Vec<Option<Vec<f64>>>,
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

// ---------------------------------------------------------------------------
// Embedding cache
// ---------------------------------------------------------------------------

/// Versioned JSON store keyed by (embedder fingerprint, text hash), used to
/// avoid re-querying an embedder for texts already seen.
#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    entries: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn open(path: &Path) -> Self {
        let entries = fs::read_to_string(path)
            .ok()
            .and_then(|text| serde_json::from_str::<CacheFile>(&text).ok())
            .filter(|f| f.version == 1)
            .map(|f| f.entries)
            .unwrap_or_default();
        EmbeddingCache { path: path.to_path_buf(), entries }
    }

    fn key(fingerprint: u64, tokens: &[String]) -> String {
        let parts: Vec<&[u8]> = tokens.iter().map(|t| t.as_bytes()).collect();
        format!("{fingerprint:016x}:{:016x}", fnv1a_parts(&parts))
    }

    pub fn get(&self, fingerprint: u64, tokens: &[String]) -> Option<EmbeddingVector> {
        self.entries
            .get(&Self::key(fingerprint, tokens))
            .map(|v| EmbeddingVector::new(v.clone()))
    }

    pub fn put(&mut self, fingerprint: u64, tokens: &[String], vector: &EmbeddingVector) {
        self.entries
            .insert(Self::key(fingerprint, tokens), vector.values().to_vec());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self) -> std::io::Result<()> {
        if let Some(parent) = self.path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = CacheFile { version: 1, entries: self.entries.clone() };
        fs::write(&self.path, serde_json::to_string(&file).expect("cache serializes"))
    }
}

/// Embed a batch through an optional cache. Results are identical with the
/// cache enabled or disabled; the cache only skips recomputation.
pub fn embed_batch_cached(
    embedder: &Embedder,
    texts: &[Vec<String>],
    cache: Option<&mut EmbeddingCache>,
) -> Result<Vec<EmbedOutcome>, EmbedError> {
    match cache {
        None => embedder.embed_batch(texts),
        Some(cache) => {
            let fp = embedder.fingerprint();
            let mut out: Vec<Option<EmbedOutcome>> = texts
                .iter()
                .map(|t| cache.get(fp, t).map(EmbedOutcome::Vector))
                .collect();
            let missing: Vec<usize> =
                (0..texts.len()).filter(|&i| out[i].is_none()).collect();
            if !missing.is_empty() {
                let todo: Vec<Vec<String>> =
                    missing.iter().map(|&i| texts[i].clone()).collect();
                let fresh = embedder.embed_batch(&todo)?;
                for (&i, outcome) in missing.iter().zip(fresh) {
                    if let EmbedOutcome::Vector(v) = &outcome {
                        cache.put(fp, &texts[i], v);
                    }
                    out[i] = Some(outcome);
                }
            }
            Ok(out.into_iter().map(|o| o.expect("filled")).collect())
        }
    }
}
