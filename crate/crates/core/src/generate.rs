//! Decoding reconstructed text from an embedding: greedy argmax, beam search
//! over cumulative log-probability, and temperature sampling.
//!
//! PAD/BOS/UNK are never generated. EOS is masked at the first step only and
//! otherwise terminates a hypothesis; the terminating EOS contributes to the
//! hypothesis log-probability but is not stored in its token list. Beam
//! scores carry no length normalization, and all ties break toward the
//! lexicographically smallest token sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BOS_ID, EOS_ID, PAD_ID, UNK_ID};
use crate::decoder::{forward_logprobs, pad_context, DecoderError, DecoderParams};
use crate::embedder::EmbeddingVector;

/// Partial or complete decode with its cumulative log-probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub logprob: f64,
    pub finished: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GenConfig {
    pub beam_width: usize,
    pub max_len: usize,
    /// Softmax temperature for `sample_decode`; 0 falls back to greedy.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { beam_width: 4, max_len: 64, temperature: 0.7, seed: 0 }
    }
}

fn allowed(token: u32, step: usize) -> bool {
    if token == PAD_ID || token == BOS_ID || token == UNK_ID {
        return false;
    }
    !(token == EOS_ID && step == 0)
}

/// Pick the argmax token at each step, smallest id on ties.
pub fn greedy_decode(
    params: &DecoderParams,
    conditioning: &EmbeddingVector,
    cfg: &GenConfig,
) -> Result<Hypothesis, DecoderError> {
    let n = params.shapes.context_window;
    let mut tokens: Vec<u32> = Vec::new();
    let mut logprob = 0.0;
    for step in 0..cfg.max_len {
        let lp = forward_logprobs(params, conditioning, &pad_context(&tokens, n))?;
        let mut best: Option<(u32, f64)> = None;
        for (id, &score) in lp.iter().enumerate() {
            let id = id as u32;
            if !allowed(id, step) {
                continue;
            }
            // strictly-greater keeps the smallest id on ties
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((id, score));
            }
        }
        let Some((tok, score)) = best else {
            break; // vocabulary holds nothing generable
        };
        logprob += score;
        if tok == EOS_ID {
            return Ok(Hypothesis { tokens, logprob, finished: true });
        }
        tokens.push(tok);
    }
    Ok(Hypothesis { tokens, logprob, finished: false })
}

#[derive(Clone, Debug)]
struct Candidate {
    tokens: Vec<u32>,
    logprob: f64,
    finished: bool,
}

impl Candidate {
    /// Order: higher log-probability first, then lexicographically smaller
    /// token sequence.
    fn beats(&self, other: &Candidate) -> std::cmp::Ordering {
        other
            .logprob
            .partial_cmp(&self.logprob)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| self.tokens.cmp(&other.tokens))
    }
}

/// Beam search: keep the `k` best hypotheses by cumulative log-probability at
/// each step; hypotheses that emit EOS retire to a finished pool and free a
/// live slot. Decoding stops when the pool holds `k` hypotheses or every
/// live hypothesis has reached `max_len`. Returns the best finished
/// hypothesis, or the best live one when nothing finished.
pub fn beam_decode(
    params: &DecoderParams,
    conditioning: &EmbeddingVector,
    cfg: &GenConfig,
) -> Result<Hypothesis, DecoderError> {
    Ok(beam_decode_kbest(params, conditioning, cfg)?
        .into_iter()
        .next()
        .expect("beam always yields at least one hypothesis"))
}

/// Full beam result, best first: the sorted finished pool, else the sorted
/// live set.
pub fn beam_decode_kbest(
    params: &DecoderParams,
    conditioning: &EmbeddingVector,
    cfg: &GenConfig,
) -> Result<Vec<Hypothesis>, DecoderError> {
    let k = cfg.beam_width.max(1);
    let n = params.shapes.context_window;

    // step 1: top-k tokens, EOS excluded
    let lp = forward_logprobs(params, conditioning, &pad_context(&[], n))?;
    let mut live: Vec<Candidate> = lp
        .iter()
        .enumerate()
        .filter(|&(id, _)| allowed(id as u32, 0))
        .map(|(id, &score)| Candidate { tokens: vec![id as u32], logprob: score, finished: false })
        .collect();
    live.sort_by(|a, b| a.beats(b));
    live.truncate(k);

    let mut finished: Vec<Candidate> = Vec::new();
    if live.is_empty() {
        return Ok(vec![Hypothesis { tokens: vec![], logprob: 0.0, finished: false }]);
    }

    while !live.is_empty() && finished.len() < k && live[0].tokens.len() < cfg.max_len {
        let mut expansions: Vec<Candidate> = Vec::with_capacity(live.len() * lp.len());
        for hyp in &live {
            let lp = forward_logprobs(params, conditioning, &pad_context(&hyp.tokens, n))?;
            for (id, &score) in lp.iter().enumerate() {
                let id = id as u32;
                if !allowed(id, hyp.tokens.len()) {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                let is_eos = id == EOS_ID;
                if !is_eos {
                    tokens.push(id);
                }
                expansions.push(Candidate {
                    tokens,
                    logprob: hyp.logprob + score,
                    finished: is_eos,
                });
            }
        }
        expansions.sort_by(|a, b| a.beats(b));
        // EOS expansions inside the global top-k retire to the finished
        // pool; each freed live slot refills with the next-ranked non-EOS
        // expansion, keeping the live beam k wide while candidates last.
        live = Vec::new();
        for (rank, cand) in expansions.into_iter().enumerate() {
            if cand.finished {
                if rank < k && finished.len() < k {
                    finished.push(cand);
                }
            } else if live.len() < k {
                live.push(cand);
            }
            if finished.len() >= k && live.len() >= k {
                break;
            }
        }
    }

    let mut pool = if finished.is_empty() { live } else { finished };
    pool.sort_by(|a, b| a.beats(b));
    Ok(pool
        .into_iter()
        .map(|c| Hypothesis { tokens: c.tokens, logprob: c.logprob, finished: c.finished })
        .collect())
}

/// Sample each step from softmax(logits / temperature) over generable
/// tokens. The stored log-probability is the model's (untempered) score of
/// the sampled sequence. Deterministic per seed.
pub fn sample_decode(
    params: &DecoderParams,
    conditioning: &EmbeddingVector,
    cfg: &GenConfig,
) -> Result<Hypothesis, DecoderError> {
    if cfg.temperature <= 0.0 {
        return greedy_decode(params, conditioning, cfg);
    }
    let n = params.shapes.context_window;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tokens: Vec<u32> = Vec::new();
    let mut logprob = 0.0;
    for step in 0..cfg.max_len {
        let lp = forward_logprobs(params, conditioning, &pad_context(&tokens, n))?;
        let ids: Vec<u32> = (0..lp.len() as u32).filter(|&id| allowed(id, step)).collect();
        if ids.is_empty() {
            break;
        }
        // tempered distribution over the allowed set
        let max = ids.iter().map(|&id| lp[id as usize]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> =
            ids.iter().map(|&id| ((lp[id as usize] - max) / cfg.temperature).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut draw = rng.gen::<f64>() * total;
        let mut chosen = *ids.last().unwrap();
        for (&id, &w) in ids.iter().zip(&weights) {
            if draw < w {
                chosen = id;
                break;
            }
            draw -= w;
        }
        logprob += lp[chosen as usize];
        if chosen == EOS_ID {
            return Ok(Hypothesis { tokens, logprob, finished: true });
        }
        tokens.push(chosen);
    }
    Ok(Hypothesis { tokens, logprob, finished: false })
}

/// Recompute a hypothesis' cumulative log-probability with teacher forcing;
/// matches the stored value to floating-point accuracy.
pub fn rescore(
    params: &DecoderParams,
    conditioning: &EmbeddingVector,
    hyp: &Hypothesis,
) -> Result<f64, DecoderError> {
    let n = params.shapes.context_window;
    let mut total = 0.0;
    for i in 0..hyp.tokens.len() {
        let lp = forward_logprobs(params, conditioning, &pad_context(&hyp.tokens[..i], n))?;
        total += lp[hyp.tokens[i] as usize];
    }
    if hyp.finished {
        let lp = forward_logprobs(params, conditioning, &pad_context(&hyp.tokens, n))?;
        total += lp[EOS_ID as usize];
    }
    Ok(total)
}
