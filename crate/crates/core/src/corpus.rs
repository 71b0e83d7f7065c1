//! Corpus ingestion: sentence segmentation, tokenization, vocabulary
//! construction, length filtering, and dataset statistics.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::fnv1a_parts;

/// Reserved token ids. Corpus tokens start at 4.
pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("max_size must be at least 4 (got {0})")]
    VocabTooSmall(usize),
    #[error("corrupt corpus file: {0}")]
    CorruptCorpus(String),
    #[error("corpus file vocab hash {found:016x} does not match vocabulary {expected:016x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// Rule-based sentence splitter: terminal punctuation plus an abbreviation
/// stop-list that suppresses splits after tokens like "dr.".
#[derive(Clone, Debug)]
pub struct SegmentConfig {
    pub abbreviations: BTreeSet<String>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        let abbreviations = [
            "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "etc", "e.g", "i.e", "vs", "no",
            "fig", "al", "inc", "ltd", "co",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        SegmentConfig { abbreviations }
    }
}

/// Split raw text into sentence strings.
///
/// A sentence ends at `.`, `!` or `?` (consuming a run of terminal marks),
/// unless the preceding word is on the abbreviation list. Whitespace at the
/// boundaries is trimmed; non-whitespace characters are preserved exactly.
pub fn segment(raw_text: &str, rules: &SegmentConfig) -> Vec<String> {
    let chars: Vec<char> = raw_text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c == '!' || c == '?' || (c == '.' && !ends_with_abbreviation(&chars[start..i], rules)) {
            // consume a run of terminal marks ("?!", "...")
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end], '.' | '!' | '?') {
                end += 1;
            }
            let piece: String = chars[start..end].iter().collect();
            let piece = piece.trim();
            if !piece.is_empty() {
                sentences.push(piece.to_string());
            }
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    let tail: String = chars[start..].iter().collect();
    let tail = tail.trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

/// True when the text before a '.' ends in a listed abbreviation.
fn ends_with_abbreviation(prefix: &[char], rules: &SegmentConfig) -> bool {
    let mut word: Vec<char> = Vec::new();
    for &c in prefix.iter().rev() {
        if c.is_whitespace() {
            break;
        }
        word.push(c);
    }
    if word.is_empty() {
        return false;
    }
    word.reverse();
    let word: String = word.iter().collect::<String>().to_lowercase();
    rules.abbreviations.contains(word.as_str())
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct TokenizeConfig {
    pub lowercase: bool,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        TokenizeConfig { lowercase: true }
    }
}

/// Whitespace tokenizer with punctuation split into standalone tokens.
pub fn tokenize(sentence: &str, cfg: TokenizeConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in sentence.chars() {
        if c.is_whitespace() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        } else if c.is_ascii_punctuation() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        } else {
            if cfg.lowercase {
                word.extend(c.to_lowercase());
            } else {
                word.push(c);
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Token inventory with fixed special ids 0..=3 and dense corpus ids from 4.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from tokenized sentences: most frequent tokens kept, ties broken
    /// lexicographically, tokens below `min_freq` dropped.
    pub fn build<'a, I>(sentences: I, max_size: usize, min_freq: usize) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if max_size < 4 {
            return Err(CorpusError::VocabTooSmall(max_size));
        }
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for sent in sentences {
            for tok in sent {
                *freq.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> =
            freq.into_iter().filter(|&(_, c)| c >= min_freq).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - 4);

        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(ranked.iter().map(|(t, _)| t.to_string()));
        Ok(Self::from_tokens(id_to_token))
    }

    fn from_tokens(id_to_token: Vec<String>) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { token_to_id, id_to_token }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    /// Id for a token, UNK for out-of-vocabulary tokens.
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<unk>").to_string())
            .collect()
    }

    /// Stable content hash over the ordered token list.
    pub fn hash(&self) -> u64 {
        let parts: Vec<&[u8]> = self.id_to_token.iter().map(|t| t.as_bytes()).collect();
        fnv1a_parts(&parts)
    }

    /// Plain-text format: one corpus token per line, line number = id - 4.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for tok in &self.id_to_token[4..] {
            out.push_str(tok);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path)?;
        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(text.lines().map(|l| l.to_string()));
        Ok(Self::from_tokens(id_to_token))
    }
}

// ---------------------------------------------------------------------------
// Sentences
// ---------------------------------------------------------------------------

/// Normalized, length-filtered text unit with encoded token ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub surface: String,
    pub tokens: Vec<u32>,
    pub source_tag: String,
}

/// Encode tokenized sentences against a vocabulary, dropping those outside
/// the `[min_len, max_len]` token window. Out-of-vocabulary tokens map to UNK.
pub fn filter_and_encode(
    sentences: &[(String, Vec<String>)],
    vocab: &Vocabulary,
    min_len: usize,
    max_len: usize,
    source_tag: &str,
) -> Vec<Sentence> {
    sentences
        .iter()
        .filter(|(_, toks)| toks.len() >= min_len && toks.len() <= max_len)
        .map(|(surface, toks)| Sentence {
            surface: surface.clone(),
            tokens: toks.iter().map(|t| vocab.id(t)).collect(),
            source_tag: source_tag.to_string(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: usize,
    pub avg_len: f64,
    pub vocab_coverage: f64,
}

pub fn corpus_stats(sentences: &[Sentence]) -> CorpusStats {
    let n = sentences.len();
    if n == 0 {
        return CorpusStats { n_sentences: 0, avg_len: 0.0, vocab_coverage: 0.0 };
    }
    let total: usize = sentences.iter().map(|s| s.tokens.len()).sum();
    let unk: usize = sentences
        .iter()
        .map(|s| s.tokens.iter().filter(|&&t| t == UNK_ID).count())
        .sum();
    CorpusStats {
        n_sentences: n,
        avg_len: total as f64 / n as f64,
        vocab_coverage: if total == 0 { 0.0 } else { 1.0 - unk as f64 / total as f64 },
    }
}

// ---------------------------------------------------------------------------
// Text loading helpers
// ---------------------------------------------------------------------------

/// Read a UTF-8 file as sentences: either one sentence per line, or raw
/// documents run through the segmenter. Returns (surface, tokens) pairs.
pub fn load_text(
    path: &Path,
    per_line: bool,
    seg: &SegmentConfig,
    tok: TokenizeConfig,
) -> Result<Vec<(String, Vec<String>)>, CorpusError> {
    let text = fs::read_to_string(path)?;
    Ok(split_text(&text, per_line, seg, tok))
}

pub fn split_text(
    text: &str,
    per_line: bool,
    seg: &SegmentConfig,
    tok: TokenizeConfig,
) -> Vec<(String, Vec<String>)> {
    let surfaces: Vec<String> = if per_line {
        text.lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.to_string())
            .collect()
    } else {
        segment(text, seg)
    };
    surfaces
        .into_iter()
        .map(|s| {
            let toks = tokenize(&s, tok);
            (s, toks)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Encoded corpus container
// ---------------------------------------------------------------------------

const CORPUS_MAGIC: &[u8; 8] = b"EMBLCORP";
const CORPUS_VERSION: u32 = 1;

/// Binary container: magic, version, vocab hash, record count, then one
/// record per sentence (token ids + source tag).
pub fn save_corpus(sentences: &[Sentence], vocab: &Vocabulary, path: &Path) -> Result<(), CorpusError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CORPUS_MAGIC);
    buf.extend_from_slice(&CORPUS_VERSION.to_le_bytes());
    buf.extend_from_slice(&vocab.hash().to_le_bytes());
    buf.extend_from_slice(&(sentences.len() as u64).to_le_bytes());
    for s in sentences {
        buf.extend_from_slice(&(s.tokens.len() as u32).to_le_bytes());
        for &t in &s.tokens {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        let tag = s.source_tag.as_bytes();
        buf.extend_from_slice(&(tag.len() as u32).to_le_bytes());
        buf.extend_from_slice(tag);
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_corpus(path: &Path, vocab: &Vocabulary) -> Result<Vec<Sentence>, CorpusError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Cursor { bytes: &bytes, pos: 0 };
    if r.take(8)? != CORPUS_MAGIC.as_slice() {
        return Err(CorpusError::CorruptCorpus("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CORPUS_VERSION {
        return Err(CorpusError::CorruptCorpus(format!("unsupported version {version}")));
    }
    let vh = r.u64()?;
    if vh != vocab.hash() {
        return Err(CorpusError::VocabMismatch { expected: vocab.hash(), found: vh });
    }
    let count = r.u64()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u32()? as usize;
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            tokens.push(r.u32()?);
        }
        let tag_len = r.u32()? as usize;
        let tag = String::from_utf8(r.take(tag_len)?.to_vec())
            .map_err(|_| CorpusError::CorruptCorpus("bad tag".into()))?;
        let surface = vocab.decode(&tokens).join(" ");
        out.push(Sentence { surface, tokens, source_tag: tag });
    }
    Ok(out)
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        if self.pos + n > self.bytes.len() {
            return Err(CorpusError::CorruptCorpus("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u32(&mut self) -> Result<u32, CorpusError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64, CorpusError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64, CorpusError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
