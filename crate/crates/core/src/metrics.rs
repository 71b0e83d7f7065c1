//! Reconstruction scoring (clipped unigram BLEU-1 / ROUGE-1), multi-trial
//! aggregation, and the two-sided unpaired t-test used for significance
//! marks.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("ROUGE-1 needs a non-empty reference")]
    EmptyReference,
    #[error("at least 2 trials are required (got {0})")]
    TooFewTrials(usize),
    #[error("each t-test sample needs at least 2 observations")]
    TooFewSamples,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu1,
    Rouge1,
}

/// Sum over the distinct tokens of `of` of the clipped count
/// min(count(x, of), count(x, other)) — the shared numerator of both metrics.
pub fn clipped_overlap<T: Eq + Hash>(of: &[T], other: &[T]) -> usize {
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for t in other {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut own: HashMap<&T, usize> = HashMap::new();
    for t in of {
        *own.entry(t).or_insert(0) += 1;
    }
    own.iter()
        .map(|(t, &c)| c.min(counts.get(t).copied().unwrap_or(0)))
        .sum()
}

/// Clipped unigram precision times the brevity penalty. An empty candidate
/// scores 0 (the BP -> 0 limit).
pub fn bleu1<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let precision = clipped_overlap(candidate, reference) as f64 / candidate.len() as f64;
    let bp = if candidate.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    };
    bp * precision
}

/// Clipped unigram recall.
pub fn rouge1<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    Ok(clipped_overlap(reference, candidate) as f64 / reference.len() as f64)
}

/// Arithmetic mean of per-sentence scores over (candidate, reference) pairs.
pub fn corpus_score<T: Eq + Hash>(
    pairs: &[(Vec<T>, Vec<T>)],
    metric: Metric,
) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (cand, reference) in pairs {
        total += match metric {
            Metric::Bleu1 => bleu1(cand, reference),
            Metric::Rouge1 => rouge1(cand, reference)?,
        };
    }
    Ok(total / pairs.len() as f64)
}

/// Mean and standard error over independent trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: usize,
}

/// Bessel-corrected standard error of the mean over >= 2 trials.
pub fn aggregate_trials(trials: &[f64]) -> Result<TrialStats, MetricsError> {
    let n = trials.len();
    if n < 2 {
        return Err(MetricsError::TooFewTrials(n));
    }
    let mean = trials.iter().sum::<f64>() / n as f64;
    let var = trials.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n as f64 - 1.0);
    Ok(TrialStats { trials: trials.to_vec(), mean, stderr: (var / n as f64).sqrt(), n_trials: n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub significant_at_005: bool,
    /// Set when both sample variances are zero; p is then 1 or 0 by
    /// comparison of means.
    pub degenerate: bool,
}

/// Welch's two-sided unpaired t-test with Welch–Satterthwaite degrees of
/// freedom.
pub fn ttest_unpaired(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricsError> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return Err(MetricsError::TooFewSamples);
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = |s: &[f64], m: f64| {
        s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (s.len() as f64 - 1.0)
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let (fa, fb) = (na as f64, nb as f64);

    if va == 0.0 && vb == 0.0 {
        let equal = ma == mb;
        return Ok(TTestResult {
            t_statistic: if equal { 0.0 } else { f64::INFINITY * (ma - mb).signum() },
            degrees_of_freedom: fa + fb - 2.0,
            p_value: if equal { 1.0 } else { 0.0 },
            significant_at_005: !equal,
            degenerate: true,
        });
    }

    let se2 = va / fa + vb / fb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / fa) * (va / fa) / (fa - 1.0) + (vb / fb) * (vb / fb) / (fb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        significant_at_005: p < 0.05,
        degenerate: false,
    })
}
