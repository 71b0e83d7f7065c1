//! End-to-end experiment orchestration: in-distribution and OOD
//! reconstruction, few-shot disclosure, text-length study, and attribute
//! inference, with seed management, optional embedding caching, and report
//! emission. A run is a pure function of (config, corpora, master seed).

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{
    infer_attribute, infer_attribute_direct, task_accuracy, AttributeError, AttributeTask,
};
use crate::corpus::{
    corpus_stats, filter_and_encode, load_text, CorpusError, SegmentConfig, Sentence,
    TokenizeConfig, Vocabulary, EOS_ID,
};
use crate::decoder::{
    continue_training, save_checkpoint, train, CheckpointMeta, DecoderError, DecoderParams,
    DecoderShapes, TrainConfig,
};
use crate::embedder::{
    embed_batch_cached, EmbedError, Embedder, EmbedderConfig, EmbedderKind, EmbeddingCache,
    EmbeddingVector, EmbedOutcome,
};
use crate::generate::{beam_decode, sample_decode, GenConfig};
use crate::hash::{derive_seed, SplitMix64};
use crate::metrics::{aggregate_trials, bleu1, rouge1, ttest_unpaired, MetricsError};
use crate::report::{emit_report, ReportError, ReportRow};
use crate::simdata::{build_feature_set, dataset_similarity, SimdataError};
use crate::trainset::{build_training_set, split, TrainingPair, TrainingSet, TrainsetError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Trainset(#[from] TrainsetError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Simdata(#[from] SimdataError),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("length bucket {min}-{max} holds no sentences")]
    EmptyBucket { min: usize, max: usize },
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecoderSpec {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_token_dim")]
    pub token_dim: usize,
    #[serde(default = "default_context")]
    pub context_window: usize,
}

fn default_hidden() -> usize {
    128
}
fn default_token_dim() -> usize {
    32
}
fn default_context() -> usize {
    4
}

impl Default for DecoderSpec {
    fn default() -> Self {
        DecoderSpec {
            hidden: default_hidden(),
            token_dim: default_token_dim(),
            context_window: default_context(),
        }
    }
}

/// Experiment description, loadable from a JSON document with the same
/// field names.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train_corpus: PathBuf,
    #[serde(default)]
    pub eval_corpora: Vec<PathBuf>,
    #[serde(default)]
    pub attribute_tasks: Vec<PathBuf>,
    pub target_embedder: EmbedderConfig,
    /// Additional target embedders to sweep, appended to the grid.
    #[serde(default)]
    pub extra_target_embedders: Vec<EmbedderConfig>,
    /// Proxy for attribute inference; defaults to the target configuration.
    #[serde(default)]
    pub proxy_embedder: Option<EmbedderConfig>,
    #[serde(default)]
    pub decoder: DecoderSpec,
    /// Hidden widths to sweep; defaults to [decoder.hidden].
    #[serde(default)]
    pub attack_sizes: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub gen: GenConfig,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_train_sizes")]
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_few_shot")]
    pub few_shot_sizes: Vec<usize>,
    #[serde(default = "default_buckets")]
    pub length_buckets: Vec<(usize, usize)>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub cache_embeddings: bool,
    #[serde(default = "default_vocab_max")]
    pub vocab_max_size: usize,
    #[serde(default = "default_min_freq")]
    pub vocab_min_freq: usize,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_true")]
    pub per_line: bool,
    #[serde(default = "default_true")]
    pub lowercase: bool,
    #[serde(default = "default_heldout")]
    pub heldout_size: usize,
    #[serde(default = "default_grams")]
    pub sim_feature_grams: usize,
}

fn default_trials() -> usize {
    10
}
fn default_train_sizes() -> Vec<usize> {
    vec![200, 1000, 5000]
}
fn default_few_shot() -> Vec<usize> {
    vec![0, 100, 500]
}
fn default_buckets() -> Vec<(usize, usize)> {
    vec![(6, 14), (20, 32), (36, 60)]
}
fn default_vocab_max() -> usize {
    2000
}
fn default_min_freq() -> usize {
    1
}
fn default_min_len() -> usize {
    4
}
fn default_max_len() -> usize {
    64
}
fn default_true() -> bool {
    true
}
fn default_heldout() -> usize {
    300
}
fn default_grams() -> usize {
    5000
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::BadConfig(e.to_string()))
    }

    fn tokenize_config(&self) -> TokenizeConfig {
        TokenizeConfig { lowercase: self.lowercase }
    }

    fn attack_sizes(&self) -> Vec<usize> {
        if self.attack_sizes.is_empty() {
            vec![self.decoder.hidden]
        } else {
            self.attack_sizes.clone()
        }
    }

    fn target_grid(&self) -> Vec<EmbedderConfig> {
        let mut grid = vec![self.target_embedder.clone()];
        grid.extend(self.extra_target_embedders.iter().cloned());
        grid
    }

    fn shapes(&self, vocab: &Vocabulary, hidden: usize, dim: usize) -> DecoderShapes {
        DecoderShapes {
            vocab_size: vocab.size(),
            token_dim: self.decoder.token_dim,
            cond_dim: dim,
            hidden,
            context_window: self.decoder.context_window,
        }
    }
}

pub fn embedder_label(cfg: &EmbedderConfig) -> String {
    let kind = match cfg.kind {
        EmbedderKind::HashedBag => "hashed_bag",
        EmbedderKind::PositionalMix => "positional_mix",
        EmbedderKind::Remote => "remote",
    };
    format!("{kind}_d{}", cfg.dim)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "corpus".to_string(), |s| s.to_string_lossy().to_string())
}

// ---------------------------------------------------------------------------
// Corpus preparation
// ---------------------------------------------------------------------------

pub type RawSentence = (String, Vec<String>);

/// Deterministically prepared corpus: shuffled encoded training pool plus a
/// raw held-out slice the decoder never sees.
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    /// Shuffled training pool, encoded; prefix subsets give the size sweep.
    pub pool: Vec<Sentence>,
    pub pool_surfaces: Vec<String>,
    /// Held-out raw sentences from the same corpus, never trained on.
    pub heldout: Vec<RawSentence>,
}

/// Load, tokenize, and length-filter a corpus file per the config.
pub fn load_raw(cfg: &ExperimentConfig, path: &Path) -> Result<Vec<RawSentence>, PipelineError> {
    let raw = load_text(path, cfg.per_line, &SegmentConfig::default(), cfg.tokenize_config())?;
    Ok(raw
        .into_iter()
        .filter(|(_, toks)| toks.len() >= cfg.min_len && toks.len() <= cfg.max_len)
        .collect())
}

pub fn prepare_corpus(cfg: &ExperimentConfig) -> Result<PreparedCorpus, PipelineError> {
    let mut raw = load_raw(cfg, &cfg.train_corpus)?;
    if raw.is_empty() {
        return Err(PipelineError::BadConfig(format!(
            "train corpus {} holds no usable sentences",
            cfg.train_corpus.display()
        )));
    }
    let mut g = SplitMix64::new(derive_seed(cfg.master_seed, "corpus-shuffle", 0));
    for i in (1..raw.len()).rev() {
        raw.swap(i, g.next_below(i + 1));
    }
    let heldout_size = cfg.heldout_size.min(raw.len() / 5);
    let heldout = raw.split_off(raw.len() - heldout_size);

    let token_refs: Vec<&[String]> = raw.iter().map(|(_, t)| t.as_slice()).collect();
    let vocab = Vocabulary::build(token_refs.iter().copied(), cfg.vocab_max_size, cfg.vocab_min_freq)?;
    let tag = stem(&cfg.train_corpus);
    let pool = filter_and_encode(&raw, &vocab, cfg.min_len, cfg.max_len, &tag);
    let pool_surfaces = raw.iter().map(|(s, _)| s.clone()).collect();
    Ok(PreparedCorpus { vocab, pool, pool_surfaces, heldout })
}

fn open_cache(cfg: &ExperimentConfig) -> Option<EmbeddingCache> {
    if cfg.cache_embeddings {
        Some(EmbeddingCache::open(&cfg.out_dir.join("cache/embeddings.json")))
    } else {
        None
    }
}

fn persist_cache(cache: &Option<EmbeddingCache>) -> Result<(), PipelineError> {
    if let Some(c) = cache {
        c.save()?;
    }
    Ok(())
}

/// Disclosed-text pairs: conditioning comes from the raw token stream (the
/// embedding the data owner published), targets from the attack vocabulary.
pub fn disclosed_pairs(
    raw: &[RawSentence],
    vocab: &Vocabulary,
    embedder: &Embedder,
    cache: &mut Option<EmbeddingCache>,
) -> Result<TrainingSet, PipelineError> {
    let texts: Vec<Vec<String>> = raw.iter().map(|(_, t)| t.clone()).collect();
    let outcomes = embed_batch_cached(embedder, &texts, cache.as_mut())?;
    let mut pairs = Vec::new();
    for ((_, toks), outcome) in raw.iter().zip(outcomes) {
        if let EmbedOutcome::Vector(conditioning) = outcome {
            let mut target_tokens: Vec<u32> = toks.iter().map(|t| vocab.id(t)).collect();
            target_tokens.push(EOS_ID);
            pairs.push(TrainingPair { conditioning, input_terminated: true, target_tokens });
        }
    }
    Ok(TrainingSet {
        pairs,
        dim: embedder.config().dim,
        embedder_fingerprint: embedder.fingerprint(),
        vocab_hash: vocab.hash(),
    })
}

// ---------------------------------------------------------------------------
// Training and evaluation cells
// ---------------------------------------------------------------------------

fn train_cell(
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    set: &TrainingSet,
    hidden: usize,
    dim: usize,
    label: &str,
) -> Result<DecoderParams, PipelineError> {
    let (tr, va, _) = split(set, (0.9, 0.1, 0.0), derive_seed(cfg.master_seed, "val-split", 0))?;
    let shapes = cfg.shapes(vocab, hidden, dim);
    let start = DecoderParams::init(shapes, derive_seed(cfg.master_seed, "init", hidden as u64));
    let train_cfg = TrainConfig {
        seed: derive_seed(cfg.master_seed, label, 0),
        ..cfg.train
    };
    let out = train(&start, &tr, &train_cfg, Some(&va))?;
    let ckpt_dir = cfg.out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let meta = CheckpointMeta {
        vocab_hash: set.vocab_hash,
        embedder_fingerprint: set.embedder_fingerprint,
        train_config: train_cfg,
    };
    save_checkpoint(&out.params, &meta, &ckpt_dir.join(format!("{label}.ckpt")))?;
    Ok(out.params)
}

/// Scores of one evaluation cell: a single beam decode per sentence plus
/// `n_trials` temperature decodes for means, errors, and t-tests.
pub struct CellScores {
    pub beam_bleu: f64,
    pub beam_rouge: f64,
    pub bleu_trials: Vec<f64>,
    pub rouge_trials: Vec<f64>,
    pub refused: usize,
    pub n_sentences: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_cell(
    params: &DecoderParams,
    vocab: &Vocabulary,
    embedder: &Embedder,
    eval_raw: &[RawSentence],
    gen: &GenConfig,
    n_trials: usize,
    trial_seed_base: u64,
    cache: &mut Option<EmbeddingCache>,
) -> Result<CellScores, PipelineError> {
    let texts: Vec<Vec<String>> = eval_raw.iter().map(|(_, t)| t.clone()).collect();
    let outcomes = embed_batch_cached(embedder, &texts, cache.as_mut())?;
    let mut items: Vec<(usize, EmbeddingVector)> = Vec::new();
    let mut refused = 0usize;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            EmbedOutcome::Vector(v) => items.push((i, v)),
            EmbedOutcome::Refused => refused += 1,
        }
    }

    struct SentenceScores {
        beam_bleu: f64,
        beam_rouge: f64,
        trial_bleu: Vec<f64>,
        trial_rouge: Vec<f64>,
    }

    let scored: Vec<Result<SentenceScores, DecoderError>> = items
        .par_iter()
        .map(|(i, e)| {
            let reference = &eval_raw[*i].1;
            let beam = beam_decode(params, e, gen)?;
            let cand = vocab.decode(&beam.tokens);
            let beam_bleu = bleu1(&cand, reference);
            let beam_rouge = rouge1(&cand, reference).unwrap_or(0.0);
            let mut trial_bleu = Vec::with_capacity(n_trials);
            let mut trial_rouge = Vec::with_capacity(n_trials);
            for t in 0..n_trials {
                let seed = derive_seed(derive_seed(trial_seed_base, "trial", t as u64), "sent", *i as u64);
                let hyp = sample_decode(params, e, &GenConfig { seed, ..*gen })?;
                let cand = vocab.decode(&hyp.tokens);
                trial_bleu.push(bleu1(&cand, reference));
                trial_rouge.push(rouge1(&cand, reference).unwrap_or(0.0));
            }
            Ok(SentenceScores { beam_bleu, beam_rouge, trial_bleu, trial_rouge })
        })
        .collect();

    let mut beam_bleu = 0.0;
    let mut beam_rouge = 0.0;
    let mut bleu_trials = vec![0.0; n_trials];
    let mut rouge_trials = vec![0.0; n_trials];
    let n = items.len().max(1) as f64;
    for s in scored {
        let s = s?;
        beam_bleu += s.beam_bleu / n;
        beam_rouge += s.beam_rouge / n;
        for t in 0..n_trials {
            bleu_trials[t] += s.trial_bleu[t] / n;
            rouge_trials[t] += s.trial_rouge[t] / n;
        }
    }
    Ok(CellScores {
        beam_bleu,
        beam_rouge,
        bleu_trials,
        rouge_trials,
        refused,
        n_sentences: items.len(),
    })
}

/// Rows for one evaluation cell: beam metrics plus, when trials were run,
/// sampled means with standard errors.
pub fn reconstruction_rows(
    experiment: &str,
    dataset: &str,
    target_model: &str,
    attack_size: usize,
    scores: &CellScores,
) -> Result<Vec<ReportRow>, PipelineError> {
    let row = |metric: &str, mean: f64, stderr: f64, n_trials: usize| ReportRow {
        experiment: experiment.to_string(),
        dataset: dataset.to_string(),
        target_model: target_model.to_string(),
        attack_size,
        metric: metric.to_string(),
        mean,
        stderr,
        n_trials,
        significant: false,
    };
    let mut rows = vec![
        row("bleu1_beam", scores.beam_bleu, 0.0, 1),
        row("rouge1_beam", scores.beam_rouge, 0.0, 1),
    ];
    if scores.bleu_trials.len() >= 2 {
        let b = aggregate_trials(&scores.bleu_trials)?;
        let r = aggregate_trials(&scores.rouge_trials)?;
        rows.push(row("bleu1_sampled", b.mean, b.stderr, b.n_trials));
        rows.push(row("rouge1_sampled", r.mean, r.stderr, r.n_trials));
    }
    Ok(rows)
}

/// Mark the best attack size per (dataset, target, sampled metric) group
/// with a star when its advantage over every other size in the group is
/// significant at p < 0.05.
fn mark_significance(rows: &mut [ReportRow], trials: &TrialBank) {
    let mut groups: std::collections::BTreeMap<(String, String, String), Vec<usize>> =
        std::collections::BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if r.metric.ends_with("_sampled") {
            groups
                .entry((r.dataset.clone(), r.target_model.clone(), r.metric.clone()))
                .or_default()
                .push(i);
        }
    }
    for idx in groups.values() {
        if idx.len() < 2 {
            continue;
        }
        let best = *idx
            .iter()
            .max_by(|&&a, &&b| rows[a].mean.partial_cmp(&rows[b].mean).unwrap())
            .unwrap();
        let all_significant = idx.iter().filter(|&&i| i != best).all(|&i| {
            let a = trials.get(&rows[best]);
            let b = trials.get(&rows[i]);
            match (a, b) {
                (Some(a), Some(b)) => {
                    ttest_unpaired(a, b).map(|t| t.significant_at_005).unwrap_or(false)
                }
                _ => false,
            }
        });
        if all_significant {
            rows[best].significant = true;
        }
    }
}

/// Per-trial corpus scores keyed like the rows they produced; feeds the
/// significance t-tests.
#[derive(Default)]
struct TrialBank {
    entries: std::collections::BTreeMap<(String, String, String, usize), Vec<f64>>,
}

impl TrialBank {
    fn put(&mut self, dataset: &str, target: &str, metric: &str, attack_size: usize, trials: &[f64]) {
        self.entries.insert(
            (dataset.to_string(), target.to_string(), metric.to_string(), attack_size),
            trials.to_vec(),
        );
    }
    fn get(&self, row: &ReportRow) -> Option<&[f64]> {
        self.entries
            .get(&(row.dataset.clone(), row.target_model.clone(), row.metric.clone(), row.attack_size))
            .map(|v| v.as_slice())
    }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Train across training-set sizes (and attack sizes / embedders when
/// swept), evaluating each decoder on the held-out slice.
pub fn run_in_distribution(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, PipelineError> {
    let prepared = prepare_corpus(cfg)?;
    let mut cache = open_cache(cfg);
    let corpus_name = stem(&cfg.train_corpus);
    let mut rows = Vec::new();
    let mut bank = TrialBank::default();

    for target_cfg in cfg.target_grid() {
        let embedder = Embedder::new(target_cfg.clone())?;
        let label = embedder_label(&target_cfg);
        let (full_set, _refused) =
            build_training_set(&prepared.pool, &embedder, &prepared.vocab, cache.as_mut())?;
        for &hidden in &cfg.attack_sizes() {
            for &size in &cfg.train_sizes {
                let size = size.min(full_set.len());
                let subset = full_set.take(size);
                let cell = format!("in_distribution_{label}_h{hidden}_n{size}");
                let params =
                    train_cell(cfg, &prepared.vocab, &subset, hidden, target_cfg.dim, &cell)?;
                let scores = evaluate_cell(
                    &params,
                    &prepared.vocab,
                    &embedder,
                    &prepared.heldout,
                    &cfg.gen,
                    cfg.n_trials,
                    derive_seed(cfg.master_seed, &cell, 1),
                    &mut cache,
                )?;
                let dataset = format!("{corpus_name}-{size}");
                bank.put(&dataset, &label, "bleu1_sampled", hidden, &scores.bleu_trials);
                bank.put(&dataset, &label, "rouge1_sampled", hidden, &scores.rouge_trials);
                rows.extend(reconstruction_rows("in_distribution", &dataset, &label, hidden, &scores)?);
            }
        }
    }
    mark_significance(&mut rows, &bank);
    persist_cache(&cache)?;
    Ok(rows)
}

/// Train once on the in-distribution pool, evaluate on the held-out slice
/// and on every eval corpus, and report each corpus' similarity to the
/// training data alongside its reconstruction scores.
pub fn run_ood(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, PipelineError> {
    let prepared = prepare_corpus(cfg)?;
    let mut cache = open_cache(cfg);
    let embedder = Embedder::new(cfg.target_embedder.clone())?;
    let label = embedder_label(&cfg.target_embedder);
    let hidden = cfg.decoder.hidden;
    let train_size =
        cfg.train_sizes.last().copied().unwrap_or(prepared.pool.len()).min(prepared.pool.len());

    let (set, _) = build_training_set(
        &prepared.pool[..train_size],
        &embedder,
        &prepared.vocab,
        cache.as_mut(),
    )?;
    let cell = format!("ood_{label}_h{hidden}_n{train_size}");
    let params = train_cell(cfg, &prepared.vocab, &set, hidden, cfg.target_embedder.dim, &cell)?;

    let features = build_feature_set(
        &prepared.pool_surfaces,
        cfg.sim_feature_grams,
        &stem(&cfg.train_corpus),
    )?;

    let mut datasets: Vec<(String, Vec<RawSentence>)> =
        vec![(format!("{}-heldout", stem(&cfg.train_corpus)), prepared.heldout.clone())];
    for path in &cfg.eval_corpora {
        datasets.push((stem(path), load_raw(cfg, path)?));
    }

    let mut rows = Vec::new();
    for (name, raw) in &datasets {
        let scores = evaluate_cell(
            &params,
            &prepared.vocab,
            &embedder,
            raw,
            &cfg.gen,
            cfg.n_trials,
            derive_seed(cfg.master_seed, &format!("ood_eval_{name}"), 1),
            &mut cache,
        )?;
        rows.extend(reconstruction_rows("ood", name, &label, hidden, &scores)?);
        let surfaces: Vec<String> = raw.iter().map(|(s, _)| s.clone()).collect();
        let sim = dataset_similarity(&prepared.pool_surfaces, &surfaces, &features)?;
        rows.push(ReportRow {
            experiment: "ood".into(),
            dataset: name.clone(),
            target_model: label.clone(),
            attack_size: hidden,
            metric: "similarity".into(),
            mean: sim,
            stderr: 0.0,
            n_trials: 1,
            significant: false,
        });
    }
    persist_cache(&cache)?;
    Ok(rows)
}

/// Few-shot disclosure: continue training the base decoder on the first
/// `s` disclosed sentences of the OOD corpus for each s in few_shot_sizes,
/// evaluating on the rest of that corpus. Size 0 is the baseline.
pub fn run_few_shot(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, PipelineError> {
    let ood_path = cfg
        .eval_corpora
        .first()
        .ok_or_else(|| PipelineError::BadConfig("few-shot needs eval_corpora[0]".into()))?;
    let prepared = prepare_corpus(cfg)?;
    let mut cache = open_cache(cfg);
    let embedder = Embedder::new(cfg.target_embedder.clone())?;
    let label = embedder_label(&cfg.target_embedder);
    let hidden = cfg.decoder.hidden;
    let train_size =
        cfg.train_sizes.last().copied().unwrap_or(prepared.pool.len()).min(prepared.pool.len());

    let (set, _) = build_training_set(
        &prepared.pool[..train_size],
        &embedder,
        &prepared.vocab,
        cache.as_mut(),
    )?;
    let cell = format!("few_shot_base_{label}_h{hidden}_n{train_size}");
    let base = train_cell(cfg, &prepared.vocab, &set, hidden, cfg.target_embedder.dim, &cell)?;

    let ood_raw = load_raw(cfg, ood_path)?;
    let max_disclosed = cfg.few_shot_sizes.iter().copied().max().unwrap_or(0);
    if ood_raw.len() <= max_disclosed {
        return Err(PipelineError::BadConfig(format!(
            "OOD corpus {} holds {} sentences, need more than the largest disclosure {}",
            ood_path.display(),
            ood_raw.len(),
            max_disclosed
        )));
    }
    let (disclosed_pool, ood_eval) = ood_raw.split_at(max_disclosed);
    let disclosed_all = disclosed_pairs(disclosed_pool, &prepared.vocab, &embedder, &mut cache)?;

    // continuation schedule: the main config at a quarter of the epochs
    let continue_cfg = TrainConfig {
        epochs: (cfg.train.epochs / 4).max(1),
        seed: derive_seed(cfg.master_seed, "few-shot-continue", 0),
        ..cfg.train
    };

    let mut rows = Vec::new();
    for &s in &cfg.few_shot_sizes {
        let params = if s == 0 {
            base.clone()
        } else {
            continue_training(&base, &disclosed_all.take(s), &continue_cfg)?.params
        };
        let scores = evaluate_cell(
            &params,
            &prepared.vocab,
            &embedder,
            ood_eval,
            &cfg.gen,
            cfg.n_trials,
            derive_seed(cfg.master_seed, &format!("few_shot_eval_{s}"), 1),
            &mut cache,
        )?;
        let dataset = format!("{}@disclosed={s}", stem(ood_path));
        rows.extend(reconstruction_rows("few_shot", &dataset, &label, hidden, &scores)?);
    }
    persist_cache(&cache)?;
    Ok(rows)
}

/// Shared decoder, per-bucket evaluation of the held-out slice.
pub fn run_length_study(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, PipelineError> {
    let prepared = prepare_corpus(cfg)?;
    let mut cache = open_cache(cfg);
    let embedder = Embedder::new(cfg.target_embedder.clone())?;
    let label = embedder_label(&cfg.target_embedder);
    let hidden = cfg.decoder.hidden;
    let train_size =
        cfg.train_sizes.last().copied().unwrap_or(prepared.pool.len()).min(prepared.pool.len());

    let (set, _) = build_training_set(
        &prepared.pool[..train_size],
        &embedder,
        &prepared.vocab,
        cache.as_mut(),
    )?;
    let cell = format!("length_{label}_h{hidden}_n{train_size}");
    let params = train_cell(cfg, &prepared.vocab, &set, hidden, cfg.target_embedder.dim, &cell)?;

    let mut rows = Vec::new();
    for &(min, max) in &cfg.length_buckets {
        let bucket: Vec<RawSentence> = prepared
            .heldout
            .iter()
            .filter(|(_, t)| t.len() >= min && t.len() <= max)
            .cloned()
            .collect();
        if bucket.is_empty() {
            return Err(PipelineError::EmptyBucket { min, max });
        }
        let scores = evaluate_cell(
            &params,
            &prepared.vocab,
            &embedder,
            &bucket,
            &cfg.gen,
            cfg.n_trials,
            derive_seed(cfg.master_seed, &format!("length_eval_{min}_{max}"), 1),
            &mut cache,
        )?;
        let dataset = format!("len{min}-{max}");
        rows.extend(reconstruction_rows("length", &dataset, &label, hidden, &scores)?);
    }
    persist_cache(&cache)?;
    Ok(rows)
}

/// Attribute inference over task files: reconstructed-mode accuracy from
/// temperature decodes (n_trials values) plus the direct-mode row computed
/// with an unguarded target.
pub fn run_attribute_eval(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, PipelineError> {
    if cfg.attribute_tasks.is_empty() {
        return Err(PipelineError::BadConfig("attribute eval needs attribute_tasks".into()));
    }
    let prepared = prepare_corpus(cfg)?;
    let mut cache = open_cache(cfg);
    let embedder = Embedder::new(cfg.target_embedder.clone())?;
    let label = embedder_label(&cfg.target_embedder);
    let proxy_cfg = cfg.proxy_embedder.clone().unwrap_or_else(|| {
        // fair-comparison default: proxy identical to the target, with the
        // refusal guard lifted so one-word candidates embed
        EmbedderConfig { min_query_tokens: 0, ..cfg.target_embedder.clone() }
    });
    let proxy = Embedder::new(proxy_cfg.clone())?;
    let hidden = cfg.decoder.hidden;
    let train_size =
        cfg.train_sizes.last().copied().unwrap_or(prepared.pool.len()).min(prepared.pool.len());

    let (set, _) = build_training_set(
        &prepared.pool[..train_size],
        &embedder,
        &prepared.vocab,
        cache.as_mut(),
    )?;
    let cell = format!("attribute_{label}_h{hidden}_n{train_size}");
    let params = train_cell(cfg, &prepared.vocab, &set, hidden, cfg.target_embedder.dim, &cell)?;

    let unguarded = Embedder::new(EmbedderConfig {
        min_query_tokens: 0,
        ..cfg.target_embedder.clone()
    })?;

    let mut rows = Vec::new();
    for task_path in &cfg.attribute_tasks {
        let task = AttributeTask::load(task_path)?;
        rows.extend(attribute_eval_with_params(
            cfg,
            &params,
            &prepared.vocab,
            &task,
            &embedder,
            &proxy,
            &unguarded,
            &mut cache,
        )?);
    }
    persist_cache(&cache)?;
    Ok(rows)
}

/// Attribute rows for one task with an already-trained decoder:
/// reconstructed-mode accuracy over n_trials temperature decodes, plus the
/// direct-mode ("no attack model") row through an unguarded target.
#[allow(clippy::too_many_arguments)]
pub fn attribute_eval_with_params(
    cfg: &ExperimentConfig,
    params: &DecoderParams,
    vocab: &Vocabulary,
    task: &AttributeTask,
    target: &Embedder,
    proxy: &Embedder,
    unguarded_target: &Embedder,
    cache: &mut Option<EmbeddingCache>,
) -> Result<Vec<ReportRow>, PipelineError> {
    let tok_cfg = cfg.tokenize_config();
    let instance_tokens: Vec<Vec<String>> =
        task.instances.iter().map(|i| crate::corpus::tokenize(&i.text, tok_cfg)).collect();
    let outcomes = embed_batch_cached(target, &instance_tokens, cache.as_mut())?;

    // reconstructed mode: one sampled decode per (trial, instance)
    let trial_base = derive_seed(cfg.master_seed, &format!("attr_{}", task.attribute_name), 2);
    let mut accuracies = Vec::with_capacity(cfg.n_trials);
    for t in 0..cfg.n_trials {
        let trial_seed = derive_seed(trial_base, "trial", t as u64);
        let predictions: Vec<Option<usize>> = outcomes
            .par_iter()
            .enumerate()
            .map(|(i, outcome)| {
                let e = outcome.vector()?;
                let seed = derive_seed(trial_seed, "inst", i as u64);
                let hyp = sample_decode(params, e, &GenConfig { seed, ..cfg.gen }).ok()?;
                let recon = vocab.decode(&hyp.tokens);
                infer_attribute(&recon, task, proxy).ok().map(|p| p.predicted)
            })
            .collect();
        accuracies.push(task_accuracy(task, &predictions));
    }

    let direct_predictions: Vec<Option<usize>> = instance_tokens
        .iter()
        .map(|toks| {
            infer_attribute_direct(toks, task, unguarded_target).ok().map(|p| p.predicted)
        })
        .collect();
    let direct_accuracy = task_accuracy(task, &direct_predictions);

    let hidden = params.shapes.hidden;
    let mk = |metric: &str, mean: f64, stderr: f64, n_trials: usize, attack: usize| ReportRow {
        experiment: "attribute".into(),
        dataset: task.attribute_name.clone(),
        target_model: embedder_label(proxy.config()),
        attack_size: attack,
        metric: metric.into(),
        mean,
        stderr,
        n_trials,
        significant: false,
    };
    let mut rows = Vec::new();
    if cfg.n_trials >= 2 {
        let agg = aggregate_trials(&accuracies)?;
        rows.push(mk("accuracy_reconstructed", agg.mean, agg.stderr, agg.n_trials, hidden));
    } else {
        rows.push(mk(
            "accuracy_reconstructed",
            accuracies.first().copied().unwrap_or(0.0),
            0.0,
            1,
            hidden,
        ));
    }
    // the "None" attack row: direct comparison, no reconstruction
    rows.push(mk("accuracy_direct", direct_accuracy, 0.0, 1, 0));
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    InDistribution,
    Ood,
    FewShot,
    Length,
    Attribute,
}

impl Experiment {
    pub fn parse(name: &str) -> Option<Experiment> {
        match name {
            "in-distribution" | "in_distribution" => Some(Experiment::InDistribution),
            "ood" => Some(Experiment::Ood),
            "few-shot" | "few_shot" => Some(Experiment::FewShot),
            "length" => Some(Experiment::Length),
            "attribute" => Some(Experiment::Attribute),
            _ => None,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Experiment::InDistribution => "in_distribution",
            Experiment::Ood => "ood",
            Experiment::FewShot => "few_shot",
            Experiment::Length => "length",
            Experiment::Attribute => "attribute",
        }
    }
}

/// Run one experiment and emit its report files under the configured
/// out-dir. Returns the rows and the files written.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    which: Experiment,
) -> Result<(Vec<ReportRow>, Vec<PathBuf>), PipelineError> {
    fs::create_dir_all(&cfg.out_dir)?;
    let rows = match which {
        Experiment::InDistribution => run_in_distribution(cfg)?,
        Experiment::Ood => run_ood(cfg)?,
        Experiment::FewShot => run_few_shot(cfg)?,
        Experiment::Length => run_length_study(cfg)?,
        Experiment::Attribute => run_attribute_eval(cfg)?,
    };
    let files = emit_report(&rows, &cfg.out_dir, which.id())?;
    Ok((rows, files))
}

/// Corpus statistics for the `stats` subcommand.
pub fn corpus_report(cfg: &ExperimentConfig, path: &Path) -> Result<String, PipelineError> {
    let raw = load_raw(cfg, path)?;
    let token_refs: Vec<&[String]> = raw.iter().map(|(_, t)| t.as_slice()).collect();
    let vocab =
        Vocabulary::build(token_refs.iter().copied(), cfg.vocab_max_size, cfg.vocab_min_freq)?;
    let sents = filter_and_encode(&raw, &vocab, cfg.min_len, cfg.max_len, &stem(path));
    let stats = corpus_stats(&sents);
    Ok(serde_json::to_string_pretty(&stats).expect("stats serialize"))
}
