//! Regenerates the shipped fixture corpora, task files, and example configs
//! under fixtures/ at the workspace root. Everything is seeded, so reruns
//! are byte-identical.

use std::fs;
use std::path::PathBuf;

use embleak_core::synth;

fn main() -> std::io::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    fs::create_dir_all(root.join("configs"))?;
    fs::create_dir_all(root.join("golden"))?;

    let write_corpus = |name: &str, lines: Vec<String>| -> std::io::Result<()> {
        let mut body = lines.join("\n");
        body.push('\n');
        fs::write(root.join(name), body)
    };

    write_corpus("synth_a.txt", synth::bio_corpus(6000, 101))?;
    write_corpus("synth_b_news.txt", synth::news_corpus(1300, 102))?;
    write_corpus("synth_c_legal.txt", synth::legal_corpus(900, 103))?;
    write_corpus("synth_d_disjoint.txt", synth::disjoint_corpus(300, 104))?;
    write_corpus("synth_len.txt", synth::length_corpus(1400, &[1, 3, 5], 105))?;

    let task = synth::occupation_task(100, 106);
    task.save(&root.join("occupation_task.json")).expect("task serializes");

    // example configs for the CLI; the acceptance suite builds its own
    let base = serde_json::json!({
        "train_corpus": "fixtures/synth_a.txt",
        "target_embedder": {"kind": "positional_mix", "dim": 64, "seed": 7},
        "decoder": {"hidden": 128, "token_dim": 32, "context_window": 4},
        "train": {"learning_rate": 1e-3, "epochs": 30, "batch_size": 32, "seed": 0,
                   "optimizer": {"kind": "adam", "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
                   "grad_clip_norm": 5.0},
        "gen": {"beam_width": 4, "max_len": 64, "temperature": 0.7, "seed": 0},
        "n_trials": 10,
        "out_dir": "out",
        "master_seed": 7,
        "sim_feature_grams": 1000
    });
    let mut in_dist = base.clone();
    in_dist["train_sizes"] = serde_json::json!([200, 1000, 5000]);
    fs::write(
        root.join("configs/in_distribution.json"),
        serde_json::to_string_pretty(&in_dist).unwrap(),
    )?;

    let mut ood = base.clone();
    ood["train_sizes"] = serde_json::json!([5000]);
    ood["eval_corpora"] =
        serde_json::json!(["fixtures/synth_b_news.txt", "fixtures/synth_c_legal.txt"]);
    fs::write(root.join("configs/ood.json"), serde_json::to_string_pretty(&ood).unwrap())?;

    let mut few_shot = base.clone();
    few_shot["train_sizes"] = serde_json::json!([5000]);
    few_shot["eval_corpora"] = serde_json::json!(["fixtures/synth_b_news.txt"]);
    few_shot["few_shot_sizes"] = serde_json::json!([0, 100, 500]);
    fs::write(
        root.join("configs/few_shot.json"),
        serde_json::to_string_pretty(&few_shot).unwrap(),
    )?;

    let mut length = base.clone();
    length["train_corpus"] = serde_json::json!("fixtures/synth_len.txt");
    length["train_sizes"] = serde_json::json!([3500]);
    length["length_buckets"] = serde_json::json!([[6, 14], [20, 32], [36, 60]]);
    length["heldout_size"] = serde_json::json!(600);
    fs::write(
        root.join("configs/length.json"),
        serde_json::to_string_pretty(&length).unwrap(),
    )?;

    let mut attribute = base.clone();
    attribute["train_sizes"] = serde_json::json!([5000]);
    attribute["attribute_tasks"] = serde_json::json!(["fixtures/occupation_task.json"]);
    attribute["target_embedder"] =
        serde_json::json!({"kind": "positional_mix", "dim": 64, "seed": 7, "min_query_tokens": 3});
    fs::write(
        root.join("configs/attribute.json"),
        serde_json::to_string_pretty(&attribute).unwrap(),
    )?;

    println!("fixtures written to {}", root.display());
    Ok(())
}
