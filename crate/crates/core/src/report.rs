//! Report emission: stable-order CSV and JSON tables plus gnuplot-ready
//! data files for the similarity and few-shot curves.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io failure writing report: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("malformed rows file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One table cell of an experiment report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub dataset: String,
    pub target_model: String,
    pub attack_size: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: usize,
    /// Star convention: the best cell of its group when its advantage over
    /// every other cell is significant at p < 0.05.
    pub significant: bool,
}

pub const CSV_HEADER: &str =
    "experiment,dataset,target_model,attack_size,metric,mean,stderr,n_trials,significant";

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{},{}\n",
            r.experiment,
            r.dataset,
            r.target_model,
            r.attack_size,
            r.metric,
            r.mean,
            r.stderr,
            r.n_trials,
            if r.significant { "*" } else { "" }
        ));
    }
    out
}

/// Write `reports/<name>.csv` and `reports/<name>.json`; returns the files
/// written. Row order is preserved exactly as given.
pub fn emit_report(rows: &[ReportRow], out_dir: &Path, name: &str) -> Result<Vec<PathBuf>, ReportError> {
    let reports = out_dir.join("reports");
    fs::create_dir_all(&reports)?;
    let mut written = Vec::new();

    let csv_path = reports.join(format!("{name}.csv"));
    fs::write(&csv_path, rows_to_csv(rows))?;
    written.push(csv_path);

    let json_path = reports.join(format!("{name}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(rows)?)?;
    written.push(json_path);

    written.extend(emit_plots(rows, out_dir)?);
    Ok(written)
}

pub fn load_rows(path: &Path) -> Result<Vec<ReportRow>, ReportError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Gnuplot-ready curves. Few-shot rows plot disclosed-size against the mean;
/// OOD rows pair each dataset's similarity with its reconstruction score.
fn emit_plots(rows: &[ReportRow], out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let plots = out_dir.join("plots");
    let mut written = Vec::new();

    let few_shot: Vec<&ReportRow> = rows
        .iter()
        .filter(|r| r.experiment == "few_shot" && r.metric == "bleu1_beam")
        .collect();
    if !few_shot.is_empty() {
        fs::create_dir_all(&plots)?;
        let mut out = String::from("# disclosed_pairs bleu1_beam\n");
        for r in &few_shot {
            // dataset carries "corpus@disclosed=N"
            let size = r.dataset.rsplit("disclosed=").next().unwrap_or("0");
            out.push_str(&format!("{} {:.6}\n", size, r.mean));
        }
        let p = plots.join("few_shot.dat");
        fs::write(&p, out)?;
        written.push(p);
    }

    let sim: Vec<&ReportRow> =
        rows.iter().filter(|r| r.experiment == "ood" && r.metric == "similarity").collect();
    if !sim.is_empty() {
        fs::create_dir_all(&plots)?;
        let mut out = String::from("# dataset similarity bleu1_beam\n");
        for s in &sim {
            let bleu = rows
                .iter()
                .find(|r| {
                    r.experiment == "ood" && r.dataset == s.dataset && r.metric == "bleu1_beam"
                })
                .map_or(f64::NAN, |r| r.mean);
            out.push_str(&format!("{} {:.6} {:.6}\n", s.dataset, s.mean, bleu));
        }
        let p = plots.join("similarity.dat");
        fs::write(&p, out)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(metric: &str, mean: f64) -> ReportRow {
        ReportRow {
            experiment: "in_distribution".into(),
            dataset: "synth_a".into(),
            target_model: "positional_mix_d64".into(),
            attack_size: 128,
            metric: metric.into(),
            mean,
            stderr: 0.01,
            n_trials: 10,
            significant: mean > 0.5,
        }
    }

    #[test]
    fn empty_rows_give_header_only_csv() {
        assert_eq!(rows_to_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_and_json_carry_identical_values() {
        let rows = vec![row("bleu1_beam", 0.625), row("rouge1_beam", 0.41)];
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&rows, dir.path(), "unit").unwrap();
        assert!(files.iter().any(|f| f.ends_with("reports/unit.csv")));
        let back = load_rows(&dir.path().join("reports/unit.json")).unwrap();
        assert_eq!(back, rows);
        let csv = std::fs::read_to_string(dir.path().join("reports/unit.csv")).unwrap();
        assert!(csv.contains("bleu1_beam,0.625000,0.010000,10,*"));
        assert!(csv.contains("rouge1_beam,0.410000,0.010000,10,"));
    }

    #[test]
    fn emission_is_byte_stable() {
        let rows = vec![row("bleu1_beam", 0.3333333333333333)];
        assert_eq!(rows_to_csv(&rows), rows_to_csv(&rows));
        let dir = tempfile::tempdir().unwrap();
        emit_report(&rows, dir.path(), "a").unwrap();
        emit_report(&rows, dir.path(), "b").unwrap();
        let a = std::fs::read(dir.path().join("reports/a.csv")).unwrap();
        let b = std::fs::read(dir.path().join("reports/b.csv")).unwrap();
        assert_eq!(a, b);
    }
}
