//! Attack-model training data: pairs of (conditioning embedding with input
//! terminator, token sequence ending in EOS) built from a corpus and a target
//! embedder.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::{Cursor, Sentence, Vocabulary, EOS_ID};
use crate::embedder::{embed_batch_cached, Embedder, EmbeddingCache, EmbeddingVector, EmbedError, EmbedOutcome};
use crate::hash::SplitMix64;

#[derive(Debug, Error)]
pub enum TrainsetError {
    #[error("every sentence in the corpus was refused by the embedder")]
    AllRefused,
    #[error("split fractions must be nonnegative and sum to 1 (got {0:?})")]
    BadFractions((f64, f64, f64)),
    #[error("corrupt training-set file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One training sample: the conditioning vector stands for d_w, the
/// terminator flag mirrors the EOS appended to the embedding input (a format
/// marker only; the decoder conditions on the fixed-size vector).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub conditioning: EmbeddingVector,
    pub input_terminated: bool,
    /// Token ids; the last element is always EOS.
    pub target_tokens: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub pairs: Vec<TrainingPair>,
    pub dim: usize,
    pub embedder_fingerprint: u64,
    pub vocab_hash: u64,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Prefix subset; keeps header identity.
    pub fn take(&self, n: usize) -> TrainingSet {
        TrainingSet {
            pairs: self.pairs[..n.min(self.pairs.len())].to_vec(),
            ..*self
        }
    }
}

/// Embed every corpus sentence and pair it with its EOS-terminated token
/// sequence. Refused sentences are excluded; the refusal count is returned
/// alongside the set.
pub fn build_training_set(
    corpus: &[Sentence],
    embedder: &Embedder,
    vocab: &Vocabulary,
    cache: Option<&mut EmbeddingCache>,
) -> Result<(TrainingSet, usize), TrainsetError> {
    let texts: Vec<Vec<String>> = corpus.iter().map(|s| vocab.decode(&s.tokens)).collect();
    let outcomes = embed_batch_cached(embedder, &texts, cache)?;

    let mut pairs = Vec::with_capacity(corpus.len());
    let mut refused = 0usize;
    for (sentence, outcome) in corpus.iter().zip(outcomes) {
        match outcome {
            EmbedOutcome::Vector(conditioning) => {
                let mut target_tokens = sentence.tokens.clone();
                target_tokens.push(EOS_ID);
                pairs.push(TrainingPair { conditioning, input_terminated: true, target_tokens });
            }
            EmbedOutcome::Refused => refused += 1,
        }
    }
    if pairs.is_empty() {
        return Err(TrainsetError::AllRefused);
    }
    Ok((
        TrainingSet {
            pairs,
            dim: embedder.config().dim,
            embedder_fingerprint: embedder.fingerprint(),
            vocab_hash: vocab.hash(),
        },
        refused,
    ))
}

/// Deterministic shuffled split into (train, validation, test).
pub fn split(
    set: &TrainingSet,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(TrainingSet, TrainingSet, TrainingSet), TrainsetError> {
    let (a, b, c) = fractions;
    if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(TrainsetError::BadFractions(fractions));
    }
    let n = set.pairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut g = SplitMix64::new(seed);
    for i in (1..n).rev() {
        order.swap(i, g.next_below(i + 1));
    }
    let n_train = (a * n as f64).round() as usize;
    let n_val = (b * n as f64).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);

    let pick = |idx: &[usize]| TrainingSet {
        pairs: idx.iter().map(|&i| set.pairs[i].clone()).collect(),
        ..*set
    };
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}

const TRAINSET_MAGIC: &[u8; 8] = b"EMBLTSET";
const TRAINSET_VERSION: u32 = 1;

/// Container: magic, version, dim, vocab hash, embedder fingerprint, count,
/// then per pair the conditioning vector as little-endian f64 and the target
/// token ids.
pub fn save_training_set(set: &TrainingSet, path: &Path) -> Result<(), TrainsetError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(TRAINSET_MAGIC);
    buf.extend_from_slice(&TRAINSET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.dim as u64).to_le_bytes());
    buf.extend_from_slice(&set.vocab_hash.to_le_bytes());
    buf.extend_from_slice(&set.embedder_fingerprint.to_le_bytes());
    buf.extend_from_slice(&(set.pairs.len() as u64).to_le_bytes());
    for pair in &set.pairs {
        buf.push(u8::from(pair.input_terminated));
        for v in pair.conditioning.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(pair.target_tokens.len() as u32).to_le_bytes());
        for &t in &pair.target_tokens {
            buf.extend_from_slice(&t.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_training_set(path: &Path) -> Result<TrainingSet, TrainsetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Cursor { bytes: &bytes, pos: 0 };
    let corrupt = |m: &str| TrainsetError::CorruptFile(m.to_string());
    if r.take(8).map_err(|_| corrupt("truncated"))? != TRAINSET_MAGIC.as_slice() {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32().map_err(|_| corrupt("truncated"))?;
    if version != TRAINSET_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let dim = r.u64().map_err(|_| corrupt("truncated"))? as usize;
    let vocab_hash = r.u64().map_err(|_| corrupt("truncated"))?;
    let embedder_fingerprint = r.u64().map_err(|_| corrupt("truncated"))?;
    let count = r.u64().map_err(|_| corrupt("truncated"))? as usize;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let flag = r.take(1).map_err(|_| corrupt("truncated"))?[0];
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            values.push(r.f64().map_err(|_| corrupt("truncated"))?);
        }
        let n = r.u32().map_err(|_| corrupt("truncated"))? as usize;
        let mut target_tokens = Vec::with_capacity(n);
        for _ in 0..n {
            target_tokens.push(r.u32().map_err(|_| corrupt("truncated"))?);
        }
        pairs.push(TrainingPair {
            conditioning: EmbeddingVector::new(values),
            input_terminated: flag != 0,
            target_tokens,
        });
    }
    Ok(TrainingSet { pairs, dim, embedder_fingerprint, vocab_hash })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{filter_and_encode, tokenize, TokenizeConfig, Vocabulary};
    use crate::embedder::EmbedderConfig;

    fn fixture(n: usize) -> (Vec<Sentence>, Vocabulary) {
        let surfaces: Vec<String> = (0..n)
            .map(|i| format!("token{} is item {} .", i % 17, i % 23))
            .collect();
        let tokenized: Vec<(String, Vec<String>)> = surfaces
            .iter()
            .map(|s| (s.clone(), tokenize(s, TokenizeConfig::default())))
            .collect();
        let refs: Vec<&[String]> = tokenized.iter().map(|(_, t)| t.as_slice()).collect();
        let vocab = Vocabulary::build(refs.iter().copied(), 1000, 1).unwrap();
        let sents = filter_and_encode(&tokenized, &vocab, 1, 64, "fixture");
        (sents, vocab)
    }

    #[test]
    fn single_sentence_pair_ends_with_eos() {
        let (sents, vocab) = fixture(1);
        let e = Embedder::new(EmbedderConfig::hashed_bag(8, 1)).unwrap();
        let (set, refused) = build_training_set(&sents, &e, &vocab, None).unwrap();
        assert_eq!(refused, 0);
        assert_eq!(set.len(), 1);
        let pair = &set.pairs[0];
        assert_eq!(*pair.target_tokens.last().unwrap(), EOS_ID);
        assert!(pair.input_terminated);
        assert_eq!(pair.target_tokens.len(), sents[0].tokens.len() + 1);
    }

    #[test]
    fn short_sentences_are_excluded_with_count() {
        let (mut sents, vocab) = fixture(3);
        sents[1].tokens.truncate(1); // below the refusal threshold
        let mut cfg = EmbedderConfig::hashed_bag(8, 1);
        cfg.min_query_tokens = 3;
        let e = Embedder::new(cfg).unwrap();
        let (set, refused) = build_training_set(&sents, &e, &vocab, None).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(refused, 1);
    }

    #[test]
    fn all_refused_is_an_error() {
        let (sents, vocab) = fixture(2);
        let mut cfg = EmbedderConfig::hashed_bag(8, 1);
        cfg.min_query_tokens = 100;
        let e = Embedder::new(cfg).unwrap();
        assert!(matches!(
            build_training_set(&sents, &e, &vocab, None),
            Err(TrainsetError::AllRefused)
        ));
    }

    #[test]
    fn conditioning_matches_recomputed_embeddings() {
        let (sents, vocab) = fixture(100);
        let e = Embedder::new(EmbedderConfig::positional_mix(16, 9)).unwrap();
        let (set, _) = build_training_set(&sents, &e, &vocab, None).unwrap();
        assert_eq!(set.len(), 100);
        for pair in &set.pairs {
            let toks = vocab.decode(&pair.target_tokens[..pair.target_tokens.len() - 1]);
            let fresh = e.embed(&toks).unwrap();
            assert_eq!(pair.conditioning, fresh, "conditioning differs from embed(target minus EOS)");
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (sents, vocab) = fixture(10);
        let e = Embedder::new(EmbedderConfig::hashed_bag(8, 1)).unwrap();
        let (set, _) = build_training_set(&sents, &e, &vocab, None).unwrap();
        let (tr, va, te) = split(&set, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
        let (tr2, va2, te2) = split(&set, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!(tr.pairs, tr2.pairs);
        assert_eq!(va.pairs, va2.pairs);
        assert_eq!(te.pairs, te2.pairs);

        // disjoint cover
        let mut seen: Vec<&TrainingPair> = Vec::new();
        seen.extend(tr.pairs.iter());
        seen.extend(va.pairs.iter());
        seen.extend(te.pairs.iter());
        assert_eq!(seen.len(), set.len());
    }

    #[test]
    fn bad_fractions() {
        let (sents, vocab) = fixture(4);
        let e = Embedder::new(EmbedderConfig::hashed_bag(8, 1)).unwrap();
        let (set, _) = build_training_set(&sents, &e, &vocab, None).unwrap();
        assert!(matches!(
            split(&set, (0.5, 0.6, 0.1), 1),
            Err(TrainsetError::BadFractions(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let (sents, vocab) = fixture(7);
        let e = Embedder::new(EmbedderConfig::positional_mix(12, 2)).unwrap();
        let (set, _) = build_training_set(&sents, &e, &vocab, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.bin");
        save_training_set(&set, &path).unwrap();
        let back = load_training_set(&path).unwrap();
        assert_eq!(set, back);

        // truncation is detected
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_training_set(&path), Err(TrainsetError::CorruptFile(_))));
    }
}
