//! Classification stage: a deterministic nearest-centroid baseline over
//! token counts, plus a line-protocol adapter for external models.
//!
//! The baseline is intentionally vocabulary-sensitive: shared rare words
//! between a training case and an evaluation case pull them together, which
//! is exactly the mechanism by which augmentation artifacts inflate scores.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::corpus::TestCase;
use crate::lexer::{tokenize, TokenKind};

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("label {0:?} has no training cases")]
    MissingLabel(String),
    #[error("case {id:?} has label {category:?} outside the label order")]
    UnknownLabel { id: String, category: String },
    #[error("external backend requires a command")]
    MissingCommand,
    #[error("external command failed: {0}")]
    ProcessFailure(String),
    #[error("malformed prediction line {line_no}: {line:?} ({message})")]
    MalformedPrediction { line_no: usize, line: String, message: String },
    #[error("duplicate prediction for id {0:?}")]
    DuplicatePrediction(String),
    #[error("prediction for unknown id {0:?}")]
    UnknownPredictionId(String),
    #[error("incomplete predictions: missing {missing} of {total} eval cases (first missing: {first:?})")]
    IncompletePredictions { missing: usize, total: usize, first: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse token-count vector. Zero counts are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector(pub BTreeMap<String, u64>);

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn l2_norm(&self) -> f64 {
        self.0.values().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
    }
}

/// Count identifier, keyword, and number tokens plus words inside string
/// literals. Punctuation, whitespace, comments, annotations, and char
/// literals are dropped. Case-sensitive.
pub fn featurize(case: &TestCase) -> FeatureVector {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for tok in &tokenize(&case.code).tokens {
        match tok.kind {
            TokenKind::Identifier | TokenKind::Keyword | TokenKind::Number => {
                *counts.entry(tok.text.clone()).or_insert(0) += 1;
            }
            TokenKind::StringLit => {
                let inner = tok.text.trim_matches('"');
                for word in inner
                    .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '$'))
                    .filter(|w| !w.is_empty())
                {
                    *counts.entry(word.to_string()).or_insert(0) += 1;
                }
            }
            _ => {}
        }
    }
    FeatureVector(counts)
}

/// Inert hyperparameters carried for provenance and passed through to
/// external backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub batch_size: u32,
    pub epochs: u32,
    pub optimizer: String,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self { learning_rate: 1e-5, batch_size: 8, epochs: 200, optimizer: "adamw".to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Builtin,
    External,
}

/// Which classifier runs and with what provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub backend: Backend,
    pub external_command: Option<String>,
    pub hyperparameters: Hyperparameters,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { backend: Backend::Builtin, external_command: None, hyperparameters: Hyperparameters::default() }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.backend == Backend::External && self.external_command.is_none() {
            return Err(ClassifierError::MissingCommand);
        }
        Ok(())
    }
}

/// Per-category L2-normalized centroids over feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    labels: Vec<String>,
    centroids: BTreeMap<String, BTreeMap<String, f64>>,
}

/// One classification outcome. `degenerate` marks the empty-feature
/// fallback to the first label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub category: String,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub degenerate: bool,
}

impl CentroidModel {
    /// Train on `cases` with the given label order. Every label must have at
    /// least one case. Order-independent: centroids are sums.
    pub fn train(cases: &[TestCase], labels: &[String]) -> Result<Self, ClassifierError> {
        if cases.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        let label_set: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        let mut sums: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
        for case in cases {
            if !label_set.contains(case.category.as_str()) {
                return Err(ClassifierError::UnknownLabel {
                    id: case.id.clone(),
                    category: case.category.clone(),
                });
            }
            let sum = sums.entry(case.category.as_str()).or_default();
            for (token, count) in featurize(case).0 {
                *sum.entry(token).or_insert(0.0) += count as f64;
            }
        }
        let mut centroids = BTreeMap::new();
        for label in labels {
            let sum = sums
                .remove(label.as_str())
                .ok_or_else(|| ClassifierError::MissingLabel(label.clone()))?;
            let norm = sum.values().map(|v| v * v).sum::<f64>().sqrt();
            let centroid = if norm > 0.0 {
                sum.into_iter().map(|(t, v)| (t, v / norm)).collect()
            } else {
                // All-empty feature set: zero vector by contract.
                BTreeMap::new()
            };
            centroids.insert(label.clone(), centroid);
        }
        Ok(Self { labels: labels.to_vec(), centroids })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Cosine similarity of a (count) feature vector against one centroid.
    /// Centroids are unit length, so only the feature norm divides.
    fn cosine(features: &FeatureVector, centroid: &BTreeMap<String, f64>, feature_norm: f64) -> f64 {
        if feature_norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = features
            .0
            .iter()
            .filter_map(|(t, &c)| centroid.get(t).map(|w| w * c as f64))
            .sum();
        dot / feature_norm
    }

    /// Argmax of cosine over categories; ties break to the earlier label in
    /// the configured order. Empty feature vectors fall back to the first
    /// label, flagged as degenerate.
    pub fn predict(&self, case: &TestCase) -> Prediction {
        let features = featurize(case);
        if features.is_empty() {
            return Prediction {
                id: case.id.clone(),
                category: self.labels[0].clone(),
                degenerate: true,
            };
        }
        let norm = features.l2_norm();
        let mut best_label = &self.labels[0];
        let mut best_score = f64::NEG_INFINITY;
        for label in &self.labels {
            let score = Self::cosine(&features, &self.centroids[label], norm);
            if score > best_score {
                best_score = score;
                best_label = label;
            }
        }
        Prediction { id: case.id.clone(), category: best_label.clone(), degenerate: false }
    }

    pub fn predict_all(&self, cases: &[TestCase]) -> Vec<Prediction> {
        cases.iter().map(|c| self.predict(c)).collect()
    }
}

#[derive(Serialize)]
struct WireCase<'a> {
    role: &'static str,
    id: &'a str,
    origin_id: &'a str,
    version: u32,
    category: &'a str,
    code: &'a str,
}

/// Run an external model: train and eval cases go to its stdin as JSONL
/// (tagged `"role":"train"|"eval"`), one `{"id":…,"category":…}` prediction
/// per eval case comes back on stdout, in any order but complete.
pub fn run_external(
    command: &str,
    train_cases: &[TestCase],
    eval_cases: &[TestCase],
) -> Result<Vec<Prediction>, ClassifierError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| ClassifierError::ProcessFailure(format!("spawn failed: {e}")))?;

    let mut stdin = child.stdin.take().expect("stdin was piped");
    let stdout = child.stdout.take().expect("stdout was piped");

    // Feed input on a separate thread so a chatty child cannot deadlock us.
    let input = {
        let mut buf = Vec::new();
        for (role, cases) in [("train", train_cases), ("eval", eval_cases)] {
            for case in cases {
                let wire = WireCase {
                    role,
                    id: &case.id,
                    origin_id: &case.origin_id,
                    version: case.version,
                    category: &case.category,
                    code: &case.code,
                };
                serde_json::to_writer(&mut buf, &wire).map_err(std::io::Error::from)?;
                buf.push(b'\n');
            }
        }
        buf
    };
    let writer = std::thread::spawn(move || stdin.write_all(&input));

    let mut by_id: BTreeMap<String, String> = BTreeMap::new();
    for (idx, line) in BufReader::new(stdout).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct WirePrediction {
            id: String,
            category: String,
        }
        let parsed: WirePrediction =
            serde_json::from_str(&line).map_err(|e| ClassifierError::MalformedPrediction {
                line_no,
                line: line.clone(),
                message: e.to_string(),
            })?;
        if !eval_cases.iter().any(|c| c.id == parsed.id) {
            return Err(ClassifierError::UnknownPredictionId(parsed.id));
        }
        if by_id.insert(parsed.id.clone(), parsed.category).is_some() {
            return Err(ClassifierError::DuplicatePrediction(parsed.id));
        }
    }

    writer
        .join()
        .map_err(|_| ClassifierError::ProcessFailure("stdin writer panicked".to_string()))?
        .or_else(|e| {
            // A child that exits after reading only part of its input still
            // counts, as long as its predictions are complete.
            if e.kind() == std::io::ErrorKind::BrokenPipe { Ok(()) } else { Err(e) }
        })?;
    let status = child.wait()?;
    if !status.success() {
        return Err(ClassifierError::ProcessFailure(format!("exit status {status}")));
    }

    let missing: Vec<&str> = eval_cases
        .iter()
        .map(|c| c.id.as_str())
        .filter(|id| !by_id.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        return Err(ClassifierError::IncompletePredictions {
            missing: missing.len(),
            total: eval_cases.len(),
            first: missing[0].to_string(),
        });
    }

    // Deterministic output order: eval case order.
    Ok(eval_cases
        .iter()
        .map(|c| Prediction {
            id: c.id.clone(),
            category: by_id[&c.id].clone(),
            degenerate: false,
        })
        .collect())
}
