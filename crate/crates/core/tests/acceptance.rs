//! Acceptance suite: one test per headline requirement, each printing a
//! PASS line with the measured numbers (run with `--nocapture` to see them
//! for passing tests).
//!
//! The experiment criteria run on the shipped fixture corpora at the pinned
//! thresholds. Heavy artifacts (the decoder trained on the full fixture
//! corpus) are shared across tests through a lazily-initialized bundle.

use std::path::PathBuf;
use std::sync::LazyLock;
use std::time::Instant;

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use embleak_core::attribute::{infer_attribute, infer_attribute_direct};
use embleak_core::corpus::{tokenize, TokenizeConfig, BOS_ID, EOS_ID, PAD_ID, UNK_ID};
use embleak_core::decoder::{
    forward_logprobs, gradients, pad_context, pair_loss, train, DecoderParams, DecoderShapes,
    TrainConfig,
};
use embleak_core::embedder::{Embedder, EmbeddingVector};
use embleak_core::generate::{beam_decode, greedy_decode, GenConfig, Hypothesis};
use embleak_core::hash::{derive_seed, SplitMix64};
use embleak_core::metrics::{aggregate_trials, bleu1, rouge1, ttest_unpaired};
use embleak_core::pipeline::{
    disclosed_pairs, evaluate_cell, load_raw, prepare_corpus, run_experiment,
    run_in_distribution, run_length_study, Experiment, ExperimentConfig, PreparedCorpus,
};
use embleak_core::report::ReportRow;
use embleak_core::simdata::{build_feature_set, dataset_similarity, spearman};
use embleak_core::trainset::{build_training_set, split, TrainingPair};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn base_config(out: &str) -> ExperimentConfig {
    serde_json::from_value(serde_json::json!({
        "train_corpus": fixture("synth_a.txt"),
        "target_embedder": {"kind": "positional_mix", "dim": 64, "seed": 7},
        "decoder": {"hidden": 128, "token_dim": 32, "context_window": 4},
        "train": {"learning_rate": 1e-3, "epochs": 30, "batch_size": 32, "seed": 0,
                   "grad_clip_norm": 5.0},
        "gen": {"beam_width": 4, "max_len": 64, "temperature": 0.7, "seed": 0},
        "n_trials": 10,
        "out_dir": std::env::temp_dir().join(format!("embleak-acceptance/{out}")),
        "master_seed": 7,
        "heldout_size": 300,
        "sim_feature_grams": 1000
    }))
    .expect("static config parses")
}

/// Decoder trained on the full fixture pool, shared by the OOD, few-shot,
/// and attribute criteria.
struct TrainedBase {
    cfg: ExperimentConfig,
    prepared: PreparedCorpus,
    embedder: Embedder,
    params: DecoderParams,
}

static BASE: LazyLock<TrainedBase> = LazyLock::new(|| {
    let cfg = base_config("base");
    let prepared = prepare_corpus(&cfg).expect("fixture corpus loads");
    let embedder = Embedder::new(cfg.target_embedder.clone()).expect("embedder");
    let (set, _) = build_training_set(&prepared.pool[..5000], &embedder, &prepared.vocab, None)
        .expect("training set");
    let (tr, va, _) = split(&set, (0.9, 0.1, 0.0), derive_seed(7, "val-split", 0)).unwrap();
    let shapes = DecoderShapes {
        vocab_size: prepared.vocab.size(),
        token_dim: 32,
        cond_dim: 64,
        hidden: 128,
        context_window: 4,
    };
    let start = DecoderParams::init(shapes, derive_seed(7, "init", 128));
    let out = train(&start, &tr, &cfg.train, Some(&va)).expect("training converges");
    TrainedBase { cfg, prepared, embedder, params: out.params }
});

fn beam_bleu_of(rows: &[ReportRow], dataset: &str) -> f64 {
    rows.iter()
        .find(|r| r.dataset == dataset && r.metric == "bleu1_beam")
        .unwrap_or_else(|| panic!("no bleu1_beam row for {dataset}"))
        .mean
}

// ---------------------------------------------------------------------------
// Metric correctness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_metric_correctness() {
    let t0 = Instant::now();
    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    // identities
    assert_eq!(bleu1(&toks("the cat"), &toks("the cat")), 1.0);
    assert_eq!(rouge1(&toks("the cat"), &toks("the cat")).unwrap(), 1.0);
    // clipped precision 2/3, BP 1
    assert!((bleu1(&toks("the cat sat"), &toks("the cat")) - 2.0 / 3.0).abs() < 1e-12);
    // shorter candidate: precision 1, BP exp(1 - 2/1)
    assert!((bleu1(&toks("the"), &toks("the cat")) - (-1.0f64).exp()).abs() < 1e-12);
    // recall cases
    assert_eq!(rouge1(&toks("x y"), &toks("a b")).unwrap(), 0.0);
    assert_eq!(rouge1(&toks("the cat sat"), &toks("the cat")).unwrap(), 1.0);
    assert_eq!(rouge1(&toks("the"), &toks("the the")).unwrap(), 0.5);
    // brevity-penalty formula across candidate lengths
    let reference: Vec<usize> = (0..7).collect();
    for c in 1..7 {
        let expect = (1.0 - 7.0 / c as f64).exp();
        assert!((bleu1(&reference[..c], &reference) - expect).abs() < 1e-12);
    }

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "metric suite took {elapsed:?}");
    println!("ACCEPTANCE metric_correctness: PASS ({elapsed:?})");
}

// ---------------------------------------------------------------------------
// Beam search
// ---------------------------------------------------------------------------

fn random_small_model(seed: u64, vocab_size: usize) -> (DecoderParams, EmbeddingVector) {
    let shapes = DecoderShapes {
        vocab_size,
        token_dim: 2,
        cond_dim: 3,
        hidden: 4,
        context_window: 2,
    };
    let mut params = DecoderParams::init(shapes, seed);
    for v in params.flat_mut() {
        *v *= 4.0;
    }
    let mut g = SplitMix64::new(seed ^ 0xACCE97);
    let e = EmbeddingVector::new((0..3).map(|_| g.next_f64() * 2.0 - 1.0).collect());
    (params, e)
}

/// Independent oracle: exhaustive enumeration of every EOS-terminated token
/// sequence reachable in max_len steps, scored with forward_logprobs only.
fn exhaustive_best(params: &DecoderParams, e: &EmbeddingVector, max_len: usize) -> Hypothesis {
    let n = params.shapes.context_window;
    let v = params.shapes.vocab_size as u32;
    let allowed = |id: u32, step: usize| {
        id != PAD_ID && id != BOS_ID && id != UNK_ID && !(id == EOS_ID && step == 0)
    };
    let mut best: Option<Hypothesis> = None;
    let mut stack: Vec<(Vec<u32>, f64)> = vec![(vec![], 0.0)];
    while let Some((prefix, score)) = stack.pop() {
        let lp = forward_logprobs(params, e, &pad_context(&prefix, n)).unwrap();
        for id in 0..v {
            if !allowed(id, prefix.len()) {
                continue;
            }
            let s = score + lp[id as usize];
            if id == EOS_ID {
                let better = match &best {
                    None => true,
                    Some(b) => s > b.logprob || (s == b.logprob && prefix < b.tokens),
                };
                if better {
                    best = Some(Hypothesis { tokens: prefix.clone(), logprob: s, finished: true });
                }
            } else if prefix.len() + 1 < max_len {
                let mut next = prefix.clone();
                next.push(id);
                stack.push((next, s));
            }
        }
    }
    best.expect("softmax gives every sequence positive probability")
}

#[test]
fn acceptance_beam_admissibility() {
    let t0 = Instant::now();
    for i in 0..50u64 {
        let vocab_size = 5 + (i % 2) as usize; // |V| in {5, 6}
        let max_len = 2 + (i % 3) as usize; // in {2, 3, 4}
        let (params, e) = random_small_model(1000 + i, vocab_size);
        let k = vocab_size.pow(max_len as u32);
        let cfg = GenConfig { beam_width: k, max_len, ..GenConfig::default() };
        let beam = beam_decode(&params, &e, &cfg).unwrap();
        let brute = exhaustive_best(&params, &e, max_len);
        assert_eq!(beam.tokens, brute.tokens, "model {i}: sequences differ");
        assert!(
            (beam.logprob - brute.logprob).abs() < 1e-12,
            "model {i}: logprob {} vs {}",
            beam.logprob,
            brute.logprob
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 30, "admissibility took {elapsed:?}");
    println!("ACCEPTANCE beam_admissibility: PASS (50 models, {elapsed:?})");
}

#[test]
fn acceptance_greedy_equals_beam_one() {
    for seed in 0..100u64 {
        let (params, e) = random_small_model(2000 + seed, 6);
        let cfg = GenConfig { beam_width: 1, max_len: 6, ..GenConfig::default() };
        let g = greedy_decode(&params, &e, &cfg).unwrap();
        let b = beam_decode(&params, &e, &cfg).unwrap();
        assert_eq!(g.tokens, b.tokens, "seed {seed}");
        assert_eq!(g.finished, b.finished, "seed {seed}");
        assert_eq!(g.logprob, b.logprob, "seed {seed}");
    }
    println!("ACCEPTANCE greedy_beam1_equivalence: PASS (100 draws, exact)");
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

#[test]
fn acceptance_gradient_check() {
    let t0 = Instant::now();
    let shapes = DecoderShapes {
        vocab_size: 9,
        token_dim: 3,
        cond_dim: 4,
        hidden: 5,
        context_window: 3,
    };
    let params = DecoderParams::init(shapes, 4242);
    let mut g = SplitMix64::new(17);
    let cond = |g: &mut SplitMix64| {
        EmbeddingVector::new((0..4).map(|_| g.next_f64() * 2.0 - 1.0).collect())
    };
    let mk_pair = |g: &mut SplitMix64, len: usize| {
        let mut t: Vec<u32> = (0..len).map(|_| 4 + g.next_below(5) as u32).collect();
        t.push(EOS_ID);
        TrainingPair { conditioning: cond(g), input_terminated: true, target_tokens: t }
    };
    let batch_pairs = [mk_pair(&mut g, 4), mk_pair(&mut g, 2), mk_pair(&mut g, 6)];
    let batch: Vec<&TrainingPair> = batch_pairs.iter().collect();
    let (_, grad) = gradients(&params, &batch).unwrap();

    let mean_loss = |p: &DecoderParams| {
        batch.iter().map(|pr| pair_loss(p, pr).unwrap()).sum::<f64>() / batch.len() as f64
    };
    // stratified over the six parameter blocks plus uniform remainder
    let total_params = shapes.param_count();
    let blocks: [usize; 6] = [
        9 * 3,
        4 * 5,
        3 * 3 * 5,
        5,
        5 * 9,
        9,
    ];
    let mut coords: Vec<usize> = Vec::new();
    let mut offset = 0usize;
    for b in blocks {
        for _ in 0..(200 / 6).min(b) {
            coords.push(offset + g.next_below(b));
        }
        offset += b;
    }
    while coords.len() < 200 {
        coords.push(g.next_below(total_params));
    }

    let eps = 1e-5;
    let mut ok = 0;
    for &i in &coords {
        let mut plus = params.clone();
        plus.flat_mut()[i] += eps;
        let mut minus = params.clone();
        minus.flat_mut()[i] -= eps;
        let fd = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * eps);
        let denom = grad[i].abs().max(fd.abs());
        let rel = if denom < 1e-8 { (grad[i] - fd).abs() } else { (grad[i] - fd).abs() / denom };
        let tol = if grad[i].abs() < 1e-8 { 1e-3 } else { 1e-4 };
        if rel < tol {
            ok += 1;
        }
    }
    let elapsed = t0.elapsed();
    assert!(ok >= 198, "finite differences agreed on {ok}/200 coordinates");
    assert!(elapsed.as_secs() < 10, "gradient check took {elapsed:?}");
    println!("ACCEPTANCE gradient_check: PASS ({ok}/200 coordinates, {elapsed:?})");
}

// ---------------------------------------------------------------------------
// E1: training size scaling
// ---------------------------------------------------------------------------

#[test]
fn acceptance_e1_training_size_trend() {
    let t0 = Instant::now();
    let mut cfg = base_config("e1");
    cfg.train_sizes = vec![200, 1000, 5000];
    let rows = run_in_distribution(&cfg).expect("in-distribution run");
    let b200 = beam_bleu_of(&rows, "synth_a-200");
    let b1000 = beam_bleu_of(&rows, "synth_a-1000");
    let b5000 = beam_bleu_of(&rows, "synth_a-5000");

    // untrained baseline on the same held-out slice
    let prepared = prepare_corpus(&cfg).unwrap();
    let embedder = Embedder::new(cfg.target_embedder.clone()).unwrap();
    let shapes = DecoderShapes {
        vocab_size: prepared.vocab.size(),
        token_dim: 32,
        cond_dim: 64,
        hidden: 128,
        context_window: 4,
    };
    let untrained = DecoderParams::init(shapes, derive_seed(7, "untrained", 0));
    let base = evaluate_cell(
        &untrained,
        &prepared.vocab,
        &embedder,
        &prepared.heldout,
        &cfg.gen,
        2,
        derive_seed(7, "untrained-eval", 1),
        &mut None,
    )
    .unwrap()
    .beam_bleu;

    let elapsed = t0.elapsed();
    assert!(
        b200 <= b1000 && b1000 <= b5000,
        "BLEU-1 not monotone in training size: {b200:.4} / {b1000:.4} / {b5000:.4}"
    );
    assert!(
        b5000 - base >= 0.30,
        "5000-size model beats untrained by only {:.4}",
        b5000 - base
    );
    assert!(elapsed.as_secs() < 900, "E1 took {elapsed:?}, budget 15 min");
    println!(
        "ACCEPTANCE e1_training_size: PASS (BLEU {b200:.4} <= {b1000:.4} <= {b5000:.4}, untrained {base:.4}, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// E2: similarity ordering
// ---------------------------------------------------------------------------

#[test]
fn acceptance_e2_similarity_ordering() {
    let base = &*BASE;
    let mut datasets: Vec<(&str, Vec<embleak_core::pipeline::RawSentence>)> =
        vec![("heldout", base.prepared.heldout.clone())];
    datasets.push(("news", load_raw(&base.cfg, &fixture("synth_b_news.txt")).unwrap()));
    datasets.push(("legal", load_raw(&base.cfg, &fixture("synth_c_legal.txt")).unwrap()));

    let features = build_feature_set(&base.prepared.pool_surfaces, 1000, "synth_a").unwrap();
    let mut bleus = Vec::new();
    let mut sims = Vec::new();
    for (name, raw) in &datasets {
        let scores = evaluate_cell(
            &base.params,
            &base.prepared.vocab,
            &base.embedder,
            raw,
            &base.cfg.gen,
            2,
            derive_seed(7, &format!("e2-{name}"), 1),
            &mut None,
        )
        .unwrap();
        let surfaces: Vec<String> = raw.iter().map(|(s, _)| s.clone()).collect();
        let sim =
            dataset_similarity(&base.prepared.pool_surfaces, &surfaces, &features).unwrap();
        bleus.push(scores.beam_bleu);
        sims.push(sim);
    }

    // rank agreement over the three points (Spearman of the two orderings)
    let rank = |v: &[f64]| -> Vec<u64> {
        v.iter()
            .map(|x| v.iter().filter(|y| *y < x).count() as u64)
            .collect()
    };
    let rho = spearman(&rank(&bleus), &rank(&sims)).unwrap();
    assert!(
        rho >= 0.9,
        "BLEU ordering disagrees with similarity ordering: bleus {bleus:?}, sims {sims:?}, rho {rho}"
    );
    println!(
        "ACCEPTANCE e2_similarity_ordering: PASS (bleu {:.4}/{:.4}/{:.4}, sim {:.4}/{:.4}/{:.4}, rho {rho:.2})",
        bleus[0], bleus[1], bleus[2], sims[0], sims[1], sims[2]
    );
}

// ---------------------------------------------------------------------------
// E3: text length
// ---------------------------------------------------------------------------

#[test]
fn acceptance_e3_length_trend() {
    let mut cfg = base_config("e3");
    cfg.train_corpus = fixture("synth_len.txt");
    cfg.train_sizes = vec![3500];
    cfg.heldout_size = 600;
    cfg.length_buckets = vec![(6, 14), (20, 32), (36, 60)];
    cfg.n_trials = 2;
    let rows = run_length_study(&cfg).expect("length study");
    let short = beam_bleu_of(&rows, "len6-14");
    let long = beam_bleu_of(&rows, "len36-60");
    assert!(
        short - long >= 0.05,
        "short-bucket advantage only {:.4} (short {short:.4}, long {long:.4})",
        short - long
    );
    println!("ACCEPTANCE e3_length_trend: PASS (short {short:.4}, long {long:.4})");
}

// ---------------------------------------------------------------------------
// E4: few-shot disclosure
// ---------------------------------------------------------------------------

#[test]
fn acceptance_e4_few_shot_gain() {
    let base = &*BASE;
    let ood = load_raw(&base.cfg, &fixture("synth_b_news.txt")).unwrap();
    let (disclosed_raw, eval_raw) = ood.split_at(500);
    let mut none = None;
    let disclosed =
        disclosed_pairs(disclosed_raw, &base.prepared.vocab, &base.embedder, &mut none).unwrap();

    let evaluate = |params: &DecoderParams, label: &str| {
        evaluate_cell(
            params,
            &base.prepared.vocab,
            &base.embedder,
            eval_raw,
            &base.cfg.gen,
            2,
            derive_seed(7, label, 1),
            &mut None,
        )
        .unwrap()
        .beam_bleu
    };
    let before = evaluate(&base.params, "e4-before");

    // the continuation schedule: main config at a quarter of the epochs
    let continue_cfg = TrainConfig {
        epochs: base.cfg.train.epochs / 4,
        seed: derive_seed(7, "e4-continue", 0),
        ..base.cfg.train
    };
    let tuned =
        embleak_core::decoder::continue_training(&base.params, &disclosed, &continue_cfg)
            .unwrap();
    let after = evaluate(&tuned.params, "e4-after");

    assert!(
        after - before >= 0.02,
        "500 disclosed pairs improved OOD BLEU-1 by only {:.4} ({before:.4} -> {after:.4})",
        after - before
    );
    println!(
        "ACCEPTANCE e4_few_shot: PASS (OOD BLEU {before:.4} -> {after:.4}, gain {:.4})",
        after - before
    );
}

// ---------------------------------------------------------------------------
// E5: attribute inference
// ---------------------------------------------------------------------------

#[test]
fn acceptance_e5_attribute_inference() {
    let base = &*BASE;
    let task =
        embleak_core::attribute::AttributeTask::load(&fixture("occupation_task.json")).unwrap();
    let proxy = &base.embedder; // proxy identical to the target, unguarded

    let tok_cfg = TokenizeConfig::default();
    let instance_tokens: Vec<Vec<String>> =
        task.instances.iter().map(|i| tokenize(&i.text, tok_cfg)).collect();

    // reconstructed mode: 10 temperature-decode trials
    let mut accuracies = Vec::new();
    for t in 0..10u64 {
        let mut correct = 0usize;
        for (i, toks) in instance_tokens.iter().enumerate() {
            let e = base.embedder.embed(toks).unwrap();
            let seed = derive_seed(derive_seed(7, "e5-trial", t), "inst", i as u64);
            let hyp = embleak_core::generate::sample_decode(
                &base.params,
                &e,
                &GenConfig { seed, ..base.cfg.gen },
            )
            .unwrap();
            let recon = base.prepared.vocab.decode(&hyp.tokens);
            if let Ok(p) = infer_attribute(&recon, &task, proxy) {
                if p.predicted == task.instances[i].gold {
                    correct += 1;
                }
            }
        }
        accuracies.push(correct as f64 / task.instances.len() as f64);
    }
    let reconstructed = aggregate_trials(&accuracies).unwrap().mean;

    // direct mode: original text against candidates, unrestricted target
    let mut correct = 0usize;
    for (i, toks) in instance_tokens.iter().enumerate() {
        let p = infer_attribute_direct(toks, &task, &base.embedder).unwrap();
        if p.predicted == task.instances[i].gold {
            correct += 1;
        }
    }
    let direct = correct as f64 / task.instances.len() as f64;

    // perfect-copy decoder stub: both modes agree exactly, instance by instance
    for toks in &instance_tokens {
        let a = infer_attribute(toks, &task, proxy).unwrap();
        let b = infer_attribute_direct(toks, &task, &base.embedder).unwrap();
        assert_eq!(a.predicted, b.predicted, "stub modes disagree on {toks:?}");
    }

    assert!(reconstructed >= 0.7, "reconstructed-mode accuracy {reconstructed:.4} < 0.7");
    assert!(
        direct >= reconstructed,
        "direct accuracy {direct:.4} below reconstructed {reconstructed:.4}"
    );
    println!(
        "ACCEPTANCE e5_attribute: PASS (reconstructed {reconstructed:.4}, direct {direct:.4}, stub agrees)"
    );
}

// ---------------------------------------------------------------------------
// Expressivity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_expressivity_trend() {
    let run = |kind: &str, dim: usize, out: &str| -> f64 {
        let mut cfg = base_config(out);
        cfg.train_sizes = vec![2000];
        cfg.n_trials = 2;
        cfg.target_embedder =
            serde_json::from_value(serde_json::json!({"kind": kind, "dim": dim, "seed": 7}))
                .unwrap();
        let rows = run_in_distribution(&cfg).unwrap();
        beam_bleu_of(&rows, "synth_a-2000")
    };
    let rich = run("positional_mix", 256, "expr-rich");
    let poor = run("hashed_bag", 16, "expr-poor");
    assert!(
        rich - poor >= 0.05,
        "expressive embedder advantage only {:.4} ({rich:.4} vs {poor:.4})",
        rich - poor
    );
    println!("ACCEPTANCE expressivity: PASS (positional d256 {rich:.4}, bag d16 {poor:.4})");
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

#[test]
fn acceptance_statistics() {
    // frozen reference case, verified against an external statistics oracle
    let r = ttest_unpaired(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert!((r.t_statistic - -1.0).abs() < 1e-4);
    assert!((r.degrees_of_freedom - 8.0).abs() < 1e-4);
    assert!((r.p_value - 0.3466).abs() < 1e-4, "p = {}", r.p_value);

    // calibration under the null: two equal-mean normal samples of 10
    let normal = rand_distr::Normal::new(0.0f64, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let mut rejections = 0usize;
    let reps = 10_000;
    for _ in 0..reps {
        let a: Vec<f64> = (0..10).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..10).map(|_| normal.sample(&mut rng)).collect();
        if ttest_unpaired(&a, &b).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    assert!(
        (rate - 0.05).abs() <= 0.01,
        "null rejection rate {rate:.4} outside 0.05 +- 0.01"
    );
    println!("ACCEPTANCE statistics: PASS (t-test oracle exact, null rejection rate {rate:.4})");
}

// ---------------------------------------------------------------------------
// Spearman suite
// ---------------------------------------------------------------------------

#[test]
fn acceptance_spearman_suite() {
    assert!((spearman(&[3, 1, 4, 1, 5], &[3, 1, 4, 1, 5]).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&[1, 2, 3], &[3, 2, 1]).unwrap() - -1.0).abs() < 1e-12);
    assert!((spearman(&[1, 1, 2], &[1, 2, 2]).unwrap() - 0.5).abs() < 1e-12);

    // symmetry and monotone-transform invariance over seeded random vectors
    let mut g = SplitMix64::new(99);
    for _ in 0..50 {
        let n = 5 + g.next_below(20);
        let a: Vec<u64> = (0..n).map(|_| g.next_below(30) as u64).collect();
        let b: Vec<u64> = (0..n).map(|_| g.next_below(30) as u64).collect();
        let (Ok(ab), Ok(ba)) = (spearman(&a, &b), spearman(&b, &a)) else {
            continue; // constant vector drawn; nothing to compare
        };
        assert!((ab - ba).abs() < 1e-12, "asymmetric: {ab} vs {ba}");
        assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
        let ta: Vec<u64> = a.iter().map(|&x| 5 * x * x + 3).collect();
        let t = spearman(&ta, &b).unwrap();
        assert!((ab - t).abs() < 1e-12, "monotone transform moved rho: {ab} vs {t}");
    }
    println!("ACCEPTANCE spearman_suite: PASS");
}

// ---------------------------------------------------------------------------
// Supporting experiment checks (module examples, not headline criteria)
// ---------------------------------------------------------------------------

/// A corpus with fully disjoint vocabulary reconstructs no better than the
/// UNK floor: the score obtained when every conditioning vector comes from
/// the UNK-substituted token stream instead of the original text.
#[test]
fn ood_disjoint_vocab_sits_at_unk_floor() {
    let base = &*BASE;
    let raw = load_raw(&base.cfg, &fixture("synth_d_disjoint.txt")).unwrap();
    let gen = &base.cfg.gen;
    let mut model_total = 0.0;
    let mut floor_total = 0.0;
    for (_, reference) in &raw {
        let ids: Vec<u32> = reference.iter().map(|t| base.prepared.vocab.id(t)).collect();
        // every word is out-of-vocabulary; only the terminal "." is shared
        for (t, &id) in reference.iter().zip(&ids) {
            assert!(
                id == UNK_ID || t == ".",
                "corpus is not vocabulary-disjoint: {t:?} is known"
            );
        }
        let unk_tokens = base.prepared.vocab.decode(&ids);
        let e_true = base.embedder.embed(reference).unwrap();
        let e_floor = base.embedder.embed(&unk_tokens).unwrap();
        let h_true = beam_decode(&base.params, &e_true, gen).unwrap();
        let h_floor = beam_decode(&base.params, &e_floor, gen).unwrap();
        model_total += bleu1(&base.prepared.vocab.decode(&h_true.tokens), reference);
        floor_total += bleu1(&base.prepared.vocab.decode(&h_floor.tokens), reference);
    }
    let n = raw.len() as f64;
    let (model, floor) = (model_total / n, floor_total / n);
    assert!(
        (model - floor).abs() <= 0.05,
        "disjoint-vocab BLEU {model:.4} is not near the UNK floor {floor:.4}"
    );
    println!("disjoint-vocab check: model {model:.4} vs UNK floor {floor:.4}");
}

/// Few-shot trajectory over {0, 100, 500} disclosed pairs is non-decreasing
/// (one inversion within 0.005 tolerated).
#[test]
fn few_shot_sizes_are_monotone() {
    let base = &*BASE;
    let ood = load_raw(&base.cfg, &fixture("synth_b_news.txt")).unwrap();
    let (disclosed_raw, eval_raw) = ood.split_at(500);
    let mut none = None;
    let disclosed =
        disclosed_pairs(disclosed_raw, &base.prepared.vocab, &base.embedder, &mut none).unwrap();
    let continue_cfg = TrainConfig {
        epochs: base.cfg.train.epochs / 4,
        seed: derive_seed(7, "e4-continue", 0),
        ..base.cfg.train
    };
    let mut scores = Vec::new();
    for s in [0usize, 100, 500] {
        let params = if s == 0 {
            base.params.clone()
        } else {
            embleak_core::decoder::continue_training(&base.params, &disclosed.take(s), &continue_cfg)
                .unwrap()
                .params
        };
        let bleu = evaluate_cell(
            &params,
            &base.prepared.vocab,
            &base.embedder,
            eval_raw,
            &base.cfg.gen,
            2,
            derive_seed(7, &format!("fs-mono-{s}"), 1),
            &mut None,
        )
        .unwrap()
        .beam_bleu;
        scores.push(bleu);
    }
    let mut inversions = 0;
    for w in scores.windows(2) {
        if w[1] < w[0] - 0.005 {
            inversions += 1;
        }
    }
    assert!(inversions == 0, "few-shot trajectory not monotone: {scores:?}");
    println!("few-shot trajectory: {scores:?}");
}

// ---------------------------------------------------------------------------
// Determinism
// ---------------------------------------------------------------------------

#[test]
fn acceptance_run_determinism() {
    let mut cfg = base_config("det-a");
    cfg.train_sizes = vec![150];
    cfg.train.epochs = 4;
    cfg.n_trials = 2;
    cfg.heldout_size = 60;
    let (_, files_a) = run_experiment(&cfg, Experiment::InDistribution).unwrap();

    let mut cfg_b = cfg.clone();
    cfg_b.out_dir = std::env::temp_dir().join("embleak-acceptance/det-b");
    let (_, files_b) = run_experiment(&cfg_b, Experiment::InDistribution).unwrap();

    let csv_a = files_a.iter().find(|f| f.extension().is_some_and(|e| e == "csv")).unwrap();
    let csv_b = files_b.iter().find(|f| f.extension().is_some_and(|e| e == "csv")).unwrap();
    let a = std::fs::read(csv_a).unwrap();
    let b = std::fs::read(csv_b).unwrap();
    assert_eq!(a, b, "re-running the experiment changed the report bytes");
    println!("ACCEPTANCE run_determinism: PASS ({} byte report)", a.len());
}
