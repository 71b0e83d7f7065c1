//! Corpus similarity via character 4-gram count vectors compared with
//! Spearman rank correlation. A higher value means more similar corpora.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimdataError {
    #[error("reference corpus yields only {found} distinct 4-grams, need {need}")]
    InsufficientGrams { need: usize, found: usize },
    #[error("rank correlation is undefined for a constant vector")]
    ZeroVariance,
    #[error("feature vectors disagree in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered list of exactly K character 4-grams (frequency descending,
/// lexicographic tiebreak) drawn from a reference corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub grams: Vec<String>,
    pub provenance: String,
}

/// Case-fold and collapse runs of whitespace to single spaces before
/// windowing, so formatting differences do not register as dissimilarity.
fn normalize(sentence: &str) -> Vec<char> {
    let mut out: Vec<char> = Vec::with_capacity(sentence.len());
    let mut last_space = true;
    for c in sentence.chars() {
        if c.is_whitespace() {
            if !last_space {
                out.push(' ');
                last_space = true;
            }
        } else {
            out.extend(c.to_lowercase());
            last_space = false;
        }
    }
    if out.last() == Some(&' ') {
        out.pop();
    }
    out
}

fn for_each_gram(sentence: &str, mut f: impl FnMut(&str)) {
    let chars = normalize(sentence);
    if chars.len() < 4 {
        return;
    }
    let mut buf = String::new();
    for w in chars.windows(4) {
        buf.clear();
        buf.extend(w);
        f(&buf);
    }
}

/// Top-K 4-grams by frequency over the reference corpus (overlapping
/// windows, spaces included).
pub fn build_feature_set(
    reference_corpus: &[String],
    k: usize,
    provenance: &str,
) -> Result<FeatureSet, SimdataError> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for sentence in reference_corpus {
        for_each_gram(sentence, |g| {
            if let Some(c) = counts.get_mut(g) {
                *c += 1;
            } else {
                counts.insert(g.to_string(), 1);
            }
        });
    }
    if counts.len() < k {
        return Err(SimdataError::InsufficientGrams { need: k, found: counts.len() });
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(FeatureSet {
        grams: ranked.into_iter().map(|(g, _)| g).collect(),
        provenance: provenance.to_string(),
    })
}

/// Exact occurrence counts of each feature gram in a corpus, overlapping
/// windows counted.
pub fn corpus_feature_vector(corpus: &[String], features: &FeatureSet) -> Vec<u64> {
    let index: HashMap<&str, usize> =
        features.grams.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut counts = vec![0u64; features.grams.len()];
    for sentence in corpus {
        for_each_gram(sentence, |g| {
            if let Some(&i) = index.get(g) {
                counts[i] += 1;
            }
        });
    }
    counts
}

/// Spearman rank correlation between two corpora's feature vectors.
pub fn dataset_similarity(
    d1: &[String],
    d2: &[String],
    features: &FeatureSet,
) -> Result<f64, SimdataError> {
    spearman(
        &corpus_feature_vector(d1, features),
        &corpus_feature_vector(d2, features),
    )
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(a: &[u64], b: &[u64]) -> Result<f64, SimdataError> {
    if a.len() != b.len() {
        return Err(SimdataError::LengthMismatch(a.len(), b.len()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn average_ranks(values: &[u64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| values[i]);
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks, ties share the average of their positions
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, SimdataError> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(SimdataError::ZeroVariance);
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Cache format: provenance header line, then one gram per line.
pub fn save_feature_set(features: &FeatureSet, path: &Path) -> Result<(), SimdataError> {
    let mut out = format!("# provenance: {}\n", features.provenance);
    for g in &features.grams {
        out.push_str(g);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_feature_set(path: &Path) -> Result<FeatureSet, SimdataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let provenance = lines
        .next()
        .and_then(|l| l.strip_prefix("# provenance: "))
        .unwrap_or("")
        .to_string();
    Ok(FeatureSet { grams: lines.map(|l| l.to_string()).collect(), provenance })
}
