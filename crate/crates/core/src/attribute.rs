//! Attribute inference from embeddings: embed a reconstruction (or the
//! original text) alongside every candidate attribute value and pick the
//! cosine-nearest candidate. No supervised training involved.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, TokenizeConfig};
use crate::embedder::{EmbedError, Embedder};

#[derive(Debug, Error)]
pub enum AttributeError {
    #[error("empty reconstruction cannot be scored")]
    EmptyReconstruction,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed task file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskInstance {
    pub text: String,
    pub gold: usize,
}

/// Candidate attribute values plus labeled instances, loadable from JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttributeTask {
    pub attribute_name: String,
    pub candidates: Vec<String>,
    pub instances: Vec<TaskInstance>,
}

impl AttributeTask {
    pub fn load(path: &Path) -> Result<Self, AttributeError> {
        let task: AttributeTask = serde_json::from_str(&fs::read_to_string(path)?)?;
        task.validate()?;
        Ok(task)
    }

    pub fn save(&self, path: &Path) -> Result<(), AttributeError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AttributeError> {
        if self.candidates.is_empty() {
            return Err(AttributeError::InvalidTask("no candidates".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c) {
                return Err(AttributeError::InvalidTask(format!("duplicate candidate {c:?}")));
            }
        }
        if let Some(bad) = self.instances.iter().find(|i| i.gold >= self.candidates.len()) {
            return Err(AttributeError::InvalidTask(format!(
                "gold index {} out of range",
                bad.gold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    Reconstructed,
    Direct,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributePrediction {
    pub predicted: usize,
    pub scores: Vec<f64>,
    pub mode: PredictionMode,
}

fn candidate_tokens(candidate: &str) -> Vec<String> {
    tokenize(candidate, TokenizeConfig::default())
}

fn nearest(
    embedder: &Embedder,
    text_tokens: &[String],
    task: &AttributeTask,
    mode: PredictionMode,
) -> Result<AttributePrediction, AttributeError> {
    let text_emb = embedder.embed(text_tokens)?;
    let mut scores = Vec::with_capacity(task.candidates.len());
    for cand in &task.candidates {
        let cand_emb = embedder.embed(&candidate_tokens(cand))?;
        scores.push(text_emb.cosine(&cand_emb));
    }
    // argmax, first index on ties
    let mut predicted = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[predicted] {
            predicted = i;
        }
    }
    Ok(AttributePrediction { predicted, scores, mode })
}

/// Proxy path: embed the reconstructed tokens and every candidate with the
/// proxy embedder (its refusal threshold must admit one-word candidates).
pub fn infer_attribute(
    reconstructed: &[String],
    task: &AttributeTask,
    proxy_embedder: &Embedder,
) -> Result<AttributePrediction, AttributeError> {
    if reconstructed.is_empty() {
        return Err(AttributeError::EmptyReconstruction);
    }
    nearest(proxy_embedder, reconstructed, task, PredictionMode::Reconstructed)
}

/// Direct path: compare the original text against candidates through the
/// target embedder. A guarded target refuses very short candidate texts;
/// that refusal surfaces here and motivates the proxy path.
pub fn infer_attribute_direct(
    original_tokens: &[String],
    task: &AttributeTask,
    target_embedder: &Embedder,
) -> Result<AttributePrediction, AttributeError> {
    nearest(target_embedder, original_tokens, task, PredictionMode::Direct)
        .map(|p| AttributePrediction { mode: PredictionMode::Direct, ..p })
}

/// Fraction of instances predicted correctly; unscorable instances (None)
/// count as wrong.
pub fn task_accuracy(task: &AttributeTask, predictions: &[Option<usize>]) -> f64 {
    assert_eq!(
        predictions.len(),
        task.instances.len(),
        "one prediction per instance"
    );
    if task.instances.is_empty() {
        return 0.0;
    }
    let correct = task
        .instances
        .iter()
        .zip(predictions)
        .filter(|(inst, pred)| **pred == Some(inst.gold))
        .count();
    correct as f64 / task.instances.len() as f64
}
