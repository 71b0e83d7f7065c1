//! embleak: train attack decoders against embedding models, reconstruct
//! text from embeddings, and measure what leaks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 remote error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use embleak_core::corpus::{
    filter_and_encode, load_text, segment, SegmentConfig, TokenizeConfig,
    Vocabulary,
};
use embleak_core::decoder::{
    load_checkpoint, save_checkpoint, train, CheckpointMeta, DecoderParams, DecoderShapes,
    TrainConfig,
};
use embleak_core::embedder::{EmbedError, Embedder, EmbedOutcome, EmbeddingCache};
use embleak_core::generate::{beam_decode, greedy_decode, sample_decode, GenConfig};
use embleak_core::hash::derive_seed;
use embleak_core::pipeline::{
    attribute_eval_with_params, embedder_label, evaluate_cell, reconstruction_rows, run_experiment,
    ExperimentConfig, Experiment, PipelineError,
};
use embleak_core::report::{emit_report, load_rows};
use embleak_core::simdata::{build_feature_set, dataset_similarity, save_feature_set};
use embleak_core::trainset::{build_training_set, load_training_set, save_training_set, split};
use embleak_core::attribute::AttributeTask;

#[derive(Parser)]
#[command(name = "embleak", version, about = "Embedding leakage audit toolkit")]
struct Cli {
    /// Experiment config JSON (see fixtures/configs/ for examples).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DecodeMode {
    Greedy,
    Beam,
    Sample,
}

#[derive(Subcommand)]
enum Cmd {
    /// Split raw text files into sentences, one per output line.
    Segment {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a vocabulary file from a corpus.
    BuildVocab {
        input: PathBuf,
        #[arg(long, default_value_t = 2000)]
        max_size: usize,
        #[arg(long, default_value_t = 1)]
        min_freq: usize,
        /// Treat the input as one document to segment rather than one
        /// sentence per line.
        #[arg(long)]
        document: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Corpus statistics (sentence count, average length, vocab coverage).
    Stats { input: PathBuf },
    /// Embed texts (one per line) with the configured target embedder.
    Embed {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a training set of (embedding, token sequence) pairs.
    MakeTrainset {
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the attack decoder on a training-set file.
    Train {
        trainset: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Reconstruct text from embeddings of the input texts; emits JSON lines.
    Decode {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, value_enum, default_value_t = DecodeMode::Beam)]
        mode: DecodeMode,
    },
    /// Score reconstructions of an eval corpus; emits CSV.
    EvalReconstruction {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
    },
    /// Attribute inference accuracy for a task file; emits CSV.
    EvalAttribute {
        task: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
    },
    /// Pairwise similarity matrix of N corpora (char 4-gram Spearman).
    CorpusSim {
        corpora: Vec<PathBuf>,
        /// Feature-set size; the first corpus is the reference.
        #[arg(long, default_value_t = 5000)]
        grams: usize,
    },
    /// Run a full experiment: in-distribution | ood | few-shot | length | attribute.
    Run { experiment: String },
    /// Re-emit report files from a rows JSON file.
    Report { rows: PathBuf },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
            std::process::exit(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Remote(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Remote(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Remote(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::Embed(EmbedError::RemoteUnavailable(_))
            | PipelineError::Embed(EmbedError::DimensionMismatch { .. }) => {
                CliError::Remote(e.to_string())
            }
            PipelineError::BadConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

macro_rules! data_err {
    ($t:ty) => {
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    };
}
data_err!(embleak_core::corpus::CorpusError);
data_err!(embleak_core::decoder::DecoderError);
data_err!(embleak_core::trainset::TrainsetError);
data_err!(embleak_core::simdata::SimdataError);
data_err!(embleak_core::attribute::AttributeError);
data_err!(embleak_core::report::ReportError);
data_err!(embleak_core::metrics::MetricsError);

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::RemoteUnavailable(_) | EmbedError::DimensionMismatch { .. } => {
                CliError::Remote(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("this command needs --config <file>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn write_or_print(output: &Option<PathBuf>, body: &str) -> Result<(), CliError> {
    match output {
        Some(path) => Ok(fs::write(path, body)?),
        None => {
            print!("{body}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn load_eval_corpus(
    cfg: &ExperimentConfig,
    path: &std::path::Path,
) -> Result<Vec<(String, Vec<String>)>, CliError> {
    let raw = load_text(path, cfg.per_line, &SegmentConfig::default(), TokenizeConfig {
        lowercase: cfg.lowercase,
    })?;
    Ok(raw
        .into_iter()
        .filter(|(_, t)| t.len() >= cfg.min_len && t.len() <= cfg.max_len)
        .collect())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Segment { input, output } => {
            let text = fs::read_to_string(input)?;
            let mut body = segment(&text, &SegmentConfig::default()).join("\n");
            body.push('\n');
            write_or_print(output, &body)
        }
        Cmd::BuildVocab { input, max_size, min_freq, document, output } => {
            let raw = load_text(
                input,
                !document,
                &SegmentConfig::default(),
                TokenizeConfig::default(),
            )?;
            let refs: Vec<&[String]> = raw.iter().map(|(_, t)| t.as_slice()).collect();
            let vocab = Vocabulary::build(refs.iter().copied(), *max_size, *min_freq)?;
            vocab.save(output)?;
            eprintln!("vocabulary of {} entries written to {}", vocab.size(), output.display());
            Ok(())
        }
        Cmd::Stats { input } => {
            let cfg = load_config(cli)?;
            println!("{}", embleak_core::pipeline::corpus_report(&cfg, input)?);
            Ok(())
        }
        Cmd::Embed { input, output } => {
            let cfg = load_config(cli)?;
            let embedder = Embedder::new(cfg.target_embedder.clone())?;
            let raw = load_eval_corpus(&cfg, input)?;
            let texts: Vec<Vec<String>> = raw.iter().map(|(_, t)| t.clone()).collect();
            let outcomes = embedder.embed_batch(&texts)?;
            let mut body = String::new();
            for ((surface, _), outcome) in raw.iter().zip(outcomes) {
                let line = match outcome {
                    EmbedOutcome::Vector(v) => serde_json::json!({
                        "text": surface, "embedding": v.values(),
                    }),
                    EmbedOutcome::Refused => serde_json::json!({
                        "text": surface, "embedding": null, "refused": true,
                    }),
                };
                body.push_str(&line.to_string());
                body.push('\n');
            }
            write_or_print(output, &body)
        }
        Cmd::MakeTrainset { input, vocab, output } => {
            let cfg = load_config(cli)?;
            let embedder = Embedder::new(cfg.target_embedder.clone())?;
            let vocab = Vocabulary::load(vocab)?;
            let raw = load_eval_corpus(&cfg, input)?;
            let sents = filter_and_encode(&raw, &vocab, cfg.min_len, cfg.max_len, "cli");
            let mut cache = cache_for(&cfg);
            let (set, refused) =
                build_training_set(&sents, &embedder, &vocab, cache.as_mut())?;
            if let Some(c) = &cache {
                c.save()?;
            }
            save_training_set(&set, output)?;
            eprintln!(
                "{} pairs written to {} ({} refused)",
                set.len(),
                output.display(),
                refused
            );
            Ok(())
        }
        Cmd::Train { trainset, vocab, output } => {
            let cfg = load_config(cli)?;
            let set = load_training_set(trainset)?;
            let vocab = Vocabulary::load(vocab)?;
            if vocab.hash() != set.vocab_hash {
                return Err(CliError::Data(format!(
                    "training set was built against vocab {:016x}, got {:016x}",
                    set.vocab_hash,
                    vocab.hash()
                )));
            }
            let (tr, va, _) =
                split(&set, (0.9, 0.1, 0.0), derive_seed(cfg.master_seed, "val-split", 0))?;
            let shapes = DecoderShapes {
                vocab_size: vocab.size(),
                token_dim: cfg.decoder.token_dim,
                cond_dim: set.dim,
                hidden: cfg.decoder.hidden,
                context_window: cfg.decoder.context_window,
            };
            let start =
                DecoderParams::init(shapes, derive_seed(cfg.master_seed, "init", 0));
            let train_cfg =
                TrainConfig { seed: derive_seed(cfg.master_seed, "train", 0), ..cfg.train };
            let out = train(&start, &tr, &train_cfg, Some(&va))?;
            save_checkpoint(
                &out.params,
                &CheckpointMeta {
                    vocab_hash: set.vocab_hash,
                    embedder_fingerprint: set.embedder_fingerprint,
                    train_config: train_cfg,
                },
                output,
            )?;
            for (i, e) in out.curve.iter().enumerate() {
                println!(
                    "epoch {:>3}  train {:.4}  val {}",
                    i + 1,
                    e.train,
                    e.validation.map_or("-".to_string(), |v| format!("{v:.4}"))
                );
            }
            eprintln!("checkpoint written to {}", output.display());
            Ok(())
        }
        Cmd::Decode { input, checkpoint, vocab, mode } => {
            let cfg = load_config(cli)?;
            let vocab = Vocabulary::load(vocab)?;
            let (params, _) = load_checkpoint(checkpoint, Some(vocab.hash()))?;
            let embedder = Embedder::new(cfg.target_embedder.clone())?;
            let raw = load_eval_corpus(&cfg, input)?;
            let gen = GenConfig { seed: cfg.master_seed, ..cfg.gen };
            for (i, (_, toks)) in raw.iter().enumerate() {
                let e = match embedder.embed(toks) {
                    Ok(e) => e,
                    Err(EmbedError::RefusedShortText { .. }) | Err(EmbedError::EmptyText) => {
                        println!("{}", serde_json::json!({"refused": true}));
                        continue;
                    }
                    Err(other) => return Err(other.into()),
                };
                let seed = derive_seed(gen.seed, "decode", i as u64);
                let hyp = match mode {
                    DecodeMode::Greedy => greedy_decode(&params, &e, &gen)?,
                    DecodeMode::Beam => beam_decode(&params, &e, &gen)?,
                    DecodeMode::Sample => {
                        sample_decode(&params, &e, &GenConfig { seed, ..gen })?
                    }
                };
                let tokens = vocab.decode(&hyp.tokens);
                println!(
                    "{}",
                    serde_json::json!({
                        "surface": tokens.join(" "),
                        "tokens": tokens,
                        "logprob": hyp.logprob,
                        "finished": hyp.finished,
                        "mode": format!("{mode:?}").to_lowercase(),
                        "seed": if matches!(mode, DecodeMode::Sample) { seed } else { gen.seed },
                    })
                );
            }
            Ok(())
        }
        Cmd::EvalReconstruction { input, checkpoint, vocab } => {
            let cfg = load_config(cli)?;
            let vocab = Vocabulary::load(vocab)?;
            let (params, _) = load_checkpoint(checkpoint, Some(vocab.hash()))?;
            let embedder = Embedder::new(cfg.target_embedder.clone())?;
            let raw = load_eval_corpus(&cfg, input)?;
            let mut cache = cache_for(&cfg);
            let scores = evaluate_cell(
                &params,
                &vocab,
                &embedder,
                &raw,
                &cfg.gen,
                cfg.n_trials,
                derive_seed(cfg.master_seed, "eval-reconstruction", 1),
                &mut cache,
            )?;
            let dataset = input
                .file_stem()
                .map_or_else(|| "corpus".to_string(), |s| s.to_string_lossy().to_string());
            let rows = reconstruction_rows(
                "eval",
                &dataset,
                &embedder_label(&cfg.target_embedder),
                params.shapes.hidden,
                &scores,
            )?;
            println!("target_model,attack_size,dataset,metric,mean,stderr,n_trials,significant");
            for r in &rows {
                println!(
                    "{},{},{},{},{:.6},{:.6},{},{}",
                    r.target_model,
                    r.attack_size,
                    r.dataset,
                    r.metric,
                    r.mean,
                    r.stderr,
                    r.n_trials,
                    if r.significant { "*" } else { "" }
                );
            }
            Ok(())
        }
        Cmd::EvalAttribute { task, checkpoint, vocab } => {
            let cfg = load_config(cli)?;
            let vocab = Vocabulary::load(vocab)?;
            let (params, _) = load_checkpoint(checkpoint, Some(vocab.hash()))?;
            let task = AttributeTask::load(task)?;
            let target = Embedder::new(cfg.target_embedder.clone())?;
            let proxy_cfg = cfg.proxy_embedder.clone().unwrap_or_else(|| {
                embleak_core::embedder::EmbedderConfig {
                    min_query_tokens: 0,
                    ..cfg.target_embedder.clone()
                }
            });
            let proxy = Embedder::new(proxy_cfg)?;
            let unguarded = Embedder::new(embleak_core::embedder::EmbedderConfig {
                min_query_tokens: 0,
                ..cfg.target_embedder.clone()
            })?;
            let mut cache = cache_for(&cfg);
            let rows = attribute_eval_with_params(
                &cfg, &params, &vocab, &task, &target, &proxy, &unguarded, &mut cache,
            )?;
            // Table-style layout: similarity model x attack size x attribute
            println!("similarity_model,attack_size,attribute,mode,accuracy,stderr,n_trials");
            for r in &rows {
                let mode = r.metric.trim_start_matches("accuracy_");
                println!(
                    "{},{},{},{},{:.6},{:.6},{}",
                    r.target_model, r.attack_size, r.dataset, mode, r.mean, r.stderr, r.n_trials
                );
            }
            Ok(())
        }
        Cmd::CorpusSim { corpora, grams } => {
            if corpora.len() < 2 {
                return Err(CliError::Usage("corpus-sim needs at least two corpora".into()));
            }
            let mut sets = Vec::new();
            for path in corpora {
                let text = fs::read_to_string(path)?;
                let lines: Vec<String> =
                    text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
                let name = path
                    .file_stem()
                    .map_or_else(|| "corpus".to_string(), |s| s.to_string_lossy().to_string());
                sets.push((name, lines));
            }
            let features = build_feature_set(&sets[0].1, *grams, &sets[0].0)?;
            if let Some(dir) = &cli.out_dir {
                fs::create_dir_all(dir.join("cache"))?;
                save_feature_set(&features, &dir.join("cache/features.txt"))?;
            }
            let mut out = String::from("corpus");
            for (name, _) in &sets {
                out.push(',');
                out.push_str(name);
            }
            out.push('\n');
            for (name_a, lines_a) in &sets {
                out.push_str(name_a);
                for (_, lines_b) in &sets {
                    let sim = dataset_similarity(lines_a, lines_b, &features)?;
                    out.push_str(&format!(",{sim:.6}"));
                }
                out.push('\n');
            }
            print!("{out}");
            Ok(())
        }
        Cmd::Run { experiment } => {
            let cfg = load_config(cli)?;
            let which = Experiment::parse(experiment).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown experiment {experiment:?}; expected in-distribution, ood, few-shot, length, or attribute"
                ))
            })?;
            let (rows, files) = run_experiment(&cfg, which)?;
            eprintln!("{} rows", rows.len());
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(())
        }
        Cmd::Report { rows } => {
            let cfg = load_config(cli)?;
            let rows = load_rows(rows)?;
            let files = emit_report(&rows, &cfg.out_dir, "report")?;
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(())
        }
    }
}

fn cache_for(cfg: &ExperimentConfig) -> Option<EmbeddingCache> {
    if cfg.cache_embeddings {
        Some(EmbeddingCache::open(&cfg.out_dir.join("cache/embeddings.json")))
    } else {
        None
    }
}
