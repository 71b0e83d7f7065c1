//! The attack model: a small embedding-conditioned feed-forward n-gram
//! language model with analytic gradients, a training loop, and checkpoints.
//!
//! Architecture, per position: z = tanh(cond_proj'·e + ctx_proj'·concat(
//! token_embed[context]) + hidden_bias); logits = out_proj'·z + out_bias;
//! log-softmax over the vocabulary. The context is the last `n` token ids of
//! the gold prefix, left-padded with BOS (teacher forcing).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Cursor, BOS_ID};
use crate::embedder::EmbeddingVector;
use crate::hash::{derive_seed, SplitMix64};
use crate::trainset::{TrainingPair, TrainingSet};

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergenceDetected { epoch: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint vocab hash {found:016x} does not match vocabulary {expected:016x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Static dimensions of the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderShapes {
    pub vocab_size: usize,
    /// Token embedding width m.
    pub token_dim: usize,
    /// Conditioning vector dimension d.
    pub cond_dim: usize,
    /// Hidden width h; "attack model size".
    pub hidden: usize,
    /// Context window n.
    pub context_window: usize,
}

impl DecoderShapes {
    pub fn param_count(&self) -> usize {
        let DecoderShapes { vocab_size: v, token_dim: m, cond_dim: d, hidden: h, context_window: n } = *self;
        v * m + d * h + n * m * h + h + h * v + v
    }
}

/// All trainable weights, stored as one flat little-endian-serializable
/// buffer with named block accessors.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub shapes: DecoderShapes,
    data: Vec<f64>,
}

// flat layout: token_embed | cond_proj | ctx_proj | hidden_bias | out_proj | out_bias
impl DecoderParams {
    pub fn zeros(shapes: DecoderShapes) -> Self {
        DecoderParams { shapes, data: vec![0.0; shapes.param_count()] }
    }

    /// Seed-controlled init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per
    /// matrix, biases zero.
    pub fn init(shapes: DecoderShapes, seed: u64) -> Self {
        let mut p = Self::zeros(shapes);
        let mut g = SplitMix64::new(seed);
        let blocks = p.block_ranges();
        let fans = [
            shapes.token_dim,                      // token_embed
            shapes.cond_dim,                       // cond_proj
            shapes.context_window * shapes.token_dim, // ctx_proj
            0,                                     // hidden_bias
            shapes.hidden,                         // out_proj
            0,                                     // out_bias
        ];
        for (range, fan) in blocks.into_iter().zip(fans) {
            if fan == 0 {
                continue;
            }
            let bound = 1.0 / (fan as f64).sqrt();
            for v in &mut p.data[range] {
                *v = (g.next_f64() * 2.0 - 1.0) * bound;
            }
        }
        p
    }

    pub fn from_blocks(
        shapes: DecoderShapes,
        token_embed: &[f64],
        cond_proj: &[f64],
        ctx_proj: &[f64],
        hidden_bias: &[f64],
        out_proj: &[f64],
        out_bias: &[f64],
    ) -> Result<Self, DecoderError> {
        let mut p = Self::zeros(shapes);
        let blocks = p.block_ranges();
        let parts = [token_embed, cond_proj, ctx_proj, hidden_bias, out_proj, out_bias];
        for (range, part) in blocks.into_iter().zip(parts) {
            if range.len() != part.len() {
                return Err(DecoderError::ShapeMismatch(format!(
                    "block of {} values given for a slot of {}",
                    part.len(),
                    range.len()
                )));
            }
            p.data[range].copy_from_slice(part);
        }
        Ok(p)
    }

    fn block_ranges(&self) -> [std::ops::Range<usize>; 6] {
        let DecoderShapes { vocab_size: v, token_dim: m, cond_dim: d, hidden: h, context_window: n } =
            self.shapes;
        let b0 = 0..v * m;
        let b1 = b0.end..b0.end + d * h;
        let b2 = b1.end..b1.end + n * m * h;
        let b3 = b2.end..b2.end + h;
        let b4 = b3.end..b3.end + h * v;
        let b5 = b4.end..b4.end + v;
        [b0, b1, b2, b3, b4, b5]
    }

    pub fn token_embed(&self) -> &[f64] {
        &self.data[self.block_ranges()[0].clone()]
    }
    pub fn cond_proj(&self) -> &[f64] {
        &self.data[self.block_ranges()[1].clone()]
    }
    pub fn ctx_proj(&self) -> &[f64] {
        &self.data[self.block_ranges()[2].clone()]
    }
    pub fn hidden_bias(&self) -> &[f64] {
        &self.data[self.block_ranges()[3].clone()]
    }
    pub fn out_proj(&self) -> &[f64] {
        &self.data[self.block_ranges()[4].clone()]
    }
    pub fn out_bias(&self) -> &[f64] {
        &self.data[self.block_ranges()[5].clone()]
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

// ---------------------------------------------------------------------------
// Training config
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
    pub grad_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::default(),
            grad_clip_norm: 5.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Forward / loss / gradients
// ---------------------------------------------------------------------------

/// Left-pad a prefix with BOS to exactly `n` context slots (keeping the last
/// `n` ids when the prefix is longer).
pub fn pad_context(prefix: &[u32], n: usize) -> Vec<u32> {
    let mut ctx = vec![BOS_ID; n];
    let take = prefix.len().min(n);
    ctx[n - take..].copy_from_slice(&prefix[prefix.len() - take..]);
    ctx
}

/// Log-probabilities over the vocabulary for one position.
pub fn forward_logprobs(
    params: &DecoderParams,
    conditioning: &EmbeddingVector,
    context: &[u32],
) -> Result<Vec<f64>, DecoderError> {
    let s = params.shapes;
    check_shapes(params, conditioning, context)?;
    let mut pre = vec![0.0f64; s.hidden];
    hidden_preactivation(params, conditioning.values(), context, &mut pre);
    let z: Vec<f64> = pre.iter().map(|a| a.tanh()).collect();
    let mut logits = params.out_bias().to_vec();
    // logits += z' · out_proj  (out_proj is h x V)
    gemm_nn(&z, params.out_proj(), &mut logits, 1, s.hidden, s.vocab_size);
    log_softmax_in_place(&mut logits);
    Ok(logits)
}

fn check_shapes(
    params: &DecoderParams,
    conditioning: &EmbeddingVector,
    context: &[u32],
) -> Result<(), DecoderError> {
    let s = params.shapes;
    if conditioning.dim() != s.cond_dim {
        return Err(DecoderError::ShapeMismatch(format!(
            "conditioning dim {} != decoder cond_dim {}",
            conditioning.dim(),
            s.cond_dim
        )));
    }
    if context.len() != s.context_window {
        return Err(DecoderError::ShapeMismatch(format!(
            "context of {} ids != window {}",
            context.len(),
            s.context_window
        )));
    }
    if let Some(&bad) = context.iter().find(|&&t| t as usize >= s.vocab_size) {
        return Err(DecoderError::ShapeMismatch(format!("token id {bad} out of range")));
    }
    Ok(())
}

fn hidden_preactivation(params: &DecoderParams, e: &[f64], context: &[u32], out: &mut [f64]) {
    let s = params.shapes;
    out.copy_from_slice(params.hidden_bias());
    gemm_nn(e, params.cond_proj(), out, 1, s.cond_dim, s.hidden);
    let te = params.token_embed();
    let wx = params.ctx_proj();
    for (slot, &tok) in context.iter().enumerate() {
        let emb = &te[tok as usize * s.token_dim..(tok as usize + 1) * s.token_dim];
        let wslice = &wx[slot * s.token_dim * s.hidden..(slot + 1) * s.token_dim * s.hidden];
        gemm_nn(emb, wslice, out, 1, s.token_dim, s.hidden);
    }
}

fn log_softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    for v in logits.iter_mut() {
        *v -= lse;
    }
}

/// Teacher-forced reconstruction loss of one pair: the sum over target
/// positions (including the terminal EOS) of the negative log-probability of
/// the gold token given the conditioning and the gold prefix.
pub fn pair_loss(params: &DecoderParams, pair: &TrainingPair) -> Result<f64, DecoderError> {
    pair_forward_backward(params, pair, 0.0, None)
}

/// Sum of pair losses over a dataset.
pub fn total_loss(params: &DecoderParams, pairs: &[TrainingPair]) -> Result<f64, DecoderError> {
    let mut total = 0.0;
    for p in pairs {
        total += pair_loss(params, p)?;
    }
    Ok(total)
}

fn mean_loss(params: &DecoderParams, pairs: &[TrainingPair]) -> Result<f64, DecoderError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    Ok(total_loss(params, pairs)? / pairs.len() as f64)
}

/// Exact analytic gradient of the mean batch loss; returns (loss, gradient)
/// with the gradient laid out like `DecoderParams::flat`.
pub fn gradients(
    params: &DecoderParams,
    batch: &[&TrainingPair],
) -> Result<(f64, Vec<f64>), DecoderError> {
    if batch.is_empty() {
        return Err(DecoderError::ShapeMismatch("gradient of an empty batch".into()));
    }
    let mut grad = vec![0.0f64; params.shapes.param_count()];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for pair in batch {
        loss += pair_forward_backward(params, pair, scale, Some(&mut grad))? * scale;
    }
    Ok((loss, grad))
}

/// Forward pass over all positions of one pair; when `grad` is given, also
/// accumulates `scale` times the gradient of the pair's summed loss.
fn pair_forward_backward(
    params: &DecoderParams,
    pair: &TrainingPair,
    scale: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64, DecoderError> {
    let s = params.shapes;
    let e = &pair.conditioning;
    if e.dim() != s.cond_dim {
        return Err(DecoderError::ShapeMismatch(format!(
            "conditioning dim {} != decoder cond_dim {}",
            e.dim(),
            s.cond_dim
        )));
    }
    if let Some(&bad) = pair.target_tokens.iter().find(|&&t| t as usize >= s.vocab_size) {
        return Err(DecoderError::ShapeMismatch(format!("target id {bad} out of range")));
    }
    let len = pair.target_tokens.len();
    let (n, m, h, v) = (s.context_window, s.token_dim, s.hidden, s.vocab_size);

    // contexts: row per position, BOS-padded sliding window over the prefix
    let mut contexts = vec![BOS_ID; len * n];
    for i in 1..len {
        let row = &mut contexts[i * n..(i + 1) * n];
        let take = i.min(n);
        row[n - take..].copy_from_slice(&pair.target_tokens[i - take..i]);
    }

    // X: gathered context embeddings, row per position
    let te = params.token_embed();
    let mut x = vec![0.0f64; len * n * m];
    for i in 0..len {
        for slot in 0..n {
            let tok = contexts[i * n + slot] as usize;
            x[i * n * m + slot * m..i * n * m + (slot + 1) * m]
                .copy_from_slice(&te[tok * m..(tok + 1) * m]);
        }
    }

    // pre-activation: bias + e·Wc broadcast per row, + X·Wx
    let mut cond_row = params.hidden_bias().to_vec();
    gemm_nn(e.values(), params.cond_proj(), &mut cond_row, 1, s.cond_dim, h);
    let mut act = vec![0.0f64; len * h];
    for i in 0..len {
        act[i * h..(i + 1) * h].copy_from_slice(&cond_row);
    }
    gemm_nn(&x, params.ctx_proj(), &mut act, len, n * m, h);
    for z in act.iter_mut() {
        *z = z.tanh();
    }

    // logits, log-softmax, loss
    let mut logits = vec![0.0f64; len * v];
    for i in 0..len {
        logits[i * v..(i + 1) * v].copy_from_slice(params.out_bias());
    }
    gemm_nn(&act, params.out_proj(), &mut logits, len, h, v);
    let mut loss = 0.0;
    for i in 0..len {
        let row = &mut logits[i * v..(i + 1) * v];
        log_softmax_in_place(row);
        loss -= row[pair.target_tokens[i] as usize];
    }

    let Some(grad) = grad else {
        return Ok(loss);
    };

    // d logits: softmax - onehot(target), times scale
    let mut dlogits = logits; // rows currently hold log-probs
    for i in 0..len {
        let row = &mut dlogits[i * v..(i + 1) * v];
        for p in row.iter_mut() {
            *p = p.exp() * scale;
        }
        row[pair.target_tokens[i] as usize] -= scale;
    }

    let ranges = params.block_ranges();
    let [r_te, r_wc, r_wx, r_bh, r_wo, r_bo] = ranges;

    // out_proj += act' · dlogits ; out_bias += column sums
    gemm_tn(&act, &dlogits, &mut grad[r_wo.start..r_wo.end], h, len, v);
    for i in 0..len {
        for j in 0..v {
            grad[r_bo.start + j] += dlogits[i * v + j];
        }
    }

    // back through tanh
    let mut dact = vec![0.0f64; len * h];
    gemm_nt(&dlogits, params.out_proj(), &mut dact, len, v, h);
    for (da, z) in dact.iter_mut().zip(&act) {
        *da *= 1.0 - z * z;
    }

    // hidden bias and conditioning projection: e is constant across rows,
    // so cond_proj's gradient is outer(e, column-sums of dact)
    let mut col = vec![0.0f64; h];
    for i in 0..len {
        for j in 0..h {
            col[j] += dact[i * h + j];
        }
    }
    for j in 0..h {
        grad[r_bh.start + j] += col[j];
    }
    for (a, &ev) in e.values().iter().enumerate() {
        for j in 0..h {
            grad[r_wc.start + a * h + j] += ev * col[j];
        }
    }

    // ctx_proj += X' · dact
    {
        let g_wx = &mut grad[r_wx.start..r_wx.end];
        gemm_tn(&x, &dact, g_wx, n * m, len, h);
    }

    // token embeddings: scatter dX rows back to their context tokens
    let mut dx = vec![0.0f64; len * n * m];
    gemm_nt(&dact, params.ctx_proj(), &mut dx, len, h, n * m);
    for i in 0..len {
        for slot in 0..n {
            let tok = contexts[i * n + slot] as usize;
            let src = &dx[i * n * m + slot * m..i * n * m + (slot + 1) * m];
            for (j, &dv) in src.iter().enumerate() {
                grad[r_te.start + tok * m + j] += dv;
            }
        }
    }
    Ok(loss)
}

// c(m x n) += a(m x k) · b(k x n), all row-major
fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

// c(m x n) += a(m x k) · b'(k x n) where b is (n x k) row-major
fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv += acc;
        }
    }
}

// c(m x n) += a'(m x k) · b(k x n) where a is (k x m) row-major
fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub train: f64,
    pub validation: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: DecoderParams,
    pub curve: Vec<EpochLoss>,
}

/// Mini-batch optimization of the mean pair loss. Deterministic given the
/// seed. With a validation set, returns the parameters achieving the best
/// validation loss seen; without one, the final parameters.
pub fn train(
    start: &DecoderParams,
    training: &TrainingSet,
    cfg: &TrainConfig,
    validation: Option<&TrainingSet>,
) -> Result<TrainOutcome, DecoderError> {
    let mut params = start.clone();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let n_params = params.shapes.param_count();
    let mut opt = OptimizerState::new(n_params);
    let val_pairs = validation.map(|v| v.pairs.as_slice()).filter(|p| !p.is_empty());

    let mut best = params.clone();
    let mut best_val = match val_pairs {
        Some(vp) => mean_loss(&params, vp)?,
        None => f64::INFINITY,
    };

    let n = training.pairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut g = SplitMix64::new(derive_seed(cfg.seed, "epoch", epoch as u64));
        for i in (1..n).rev() {
            order.swap(i, g.next_below(i + 1));
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&TrainingPair> = chunk.iter().map(|&i| &training.pairs[i]).collect();
            if batch.is_empty() {
                continue;
            }
            let (loss, mut grad) = gradients(&params, &batch)?;
            if !loss.is_finite() {
                return Err(DecoderError::DivergenceDetected { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            clip_grad(&mut grad, cfg.grad_clip_norm);
            opt.step(&mut params, &grad, cfg);
        }
        let train_loss = if n == 0 { 0.0 } else { epoch_loss / n as f64 };
        if !train_loss.is_finite() {
            return Err(DecoderError::DivergenceDetected { epoch });
        }
        let validation_loss = match val_pairs {
            Some(vp) => {
                let vl = mean_loss(&params, vp)?;
                if vl < best_val {
                    best_val = vl;
                    best = params.clone();
                }
                Some(vl)
            }
            None => None,
        };
        curve.push(EpochLoss { train: train_loss, validation: validation_loss });
    }
    let final_params = if val_pairs.is_some() { best } else { params };
    Ok(TrainOutcome { params: final_params, curve })
}

/// Further fine-tuning on extra pairs, starting from trained parameters.
/// Identical mechanics to `train`; an empty extra set is a no-op.
pub fn continue_training(
    start: &DecoderParams,
    extra: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, DecoderError> {
    train(start, extra, cfg, None)
}

fn clip_grad(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
}

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptimizerState {
    fn new(n: usize) -> Self {
        OptimizerState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut DecoderParams, grad: &[f64], cfg: &TrainConfig) {
        let lr = cfg.learning_rate;
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, &g) in params.flat_mut().iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for ((p, &g), (m, v)) in params
                    .flat_mut()
                    .iter_mut()
                    .zip(grad)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub vocab_hash: u64,
    pub embedder_fingerprint: u64,
    pub train_config: TrainConfig,
}

const CKPT_MAGIC: &[u8; 8] = b"EMBLCKPT";
const CKPT_VERSION: u32 = 1;

/// Versioned header (shapes, vocab hash, embedder fingerprint, config echo)
/// followed by the little-endian f64 parameter payload.
pub fn save_checkpoint(
    params: &DecoderParams,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), DecoderError> {
    let header = serde_json::json!({
        "shapes": params.shapes,
        "meta": meta,
    });
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(params.flat().len() as u64).to_le_bytes());
    for v in params.flat() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Load a checkpoint, refusing when `expected_vocab_hash` is given and does
/// not match the stored one.
pub fn load_checkpoint(
    path: &Path,
    expected_vocab_hash: Option<u64>,
) -> Result<(DecoderParams, CheckpointMeta), DecoderError> {
    let corrupt = |m: &str| DecoderError::CorruptCheckpoint(m.to_string());
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Cursor { bytes: &bytes, pos: 0 };
    if r.take(8).map_err(|_| corrupt("truncated"))? != CKPT_MAGIC.as_slice() {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32().map_err(|_| corrupt("truncated"))?;
    if version != CKPT_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let header_len = r.u32().map_err(|_| corrupt("truncated"))? as usize;
    let header = r.take(header_len).map_err(|_| corrupt("truncated header"))?;
    #[derive(Deserialize)]
    struct Header {
        shapes: DecoderShapes,
        meta: CheckpointMeta,
    }
    let header: Header =
        serde_json::from_slice(header).map_err(|e| corrupt(&format!("bad header: {e}")))?;
    if let Some(expected) = expected_vocab_hash {
        if header.meta.vocab_hash != expected {
            return Err(DecoderError::VocabMismatch {
                expected,
                found: header.meta.vocab_hash,
            });
        }
    }
    let count = r.u64().map_err(|_| corrupt("truncated"))? as usize;
    if count != header.shapes.param_count() {
        return Err(corrupt("payload count does not match shapes"));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.f64().map_err(|_| corrupt("truncated payload"))?);
    }
    Ok((DecoderParams { shapes: header.shapes, data }, header.meta))
}
