//! End-to-end audit pipeline: ingest, augment, split, verify, lint, train,
//! evaluate, report. Every intermediate artifact lands in the output
//! directory; a manifest with the config digest, the seed, and per-file
//! digests is written last.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{augment_corpus, AugmentError};
use crate::classifier::{run_external, Backend, CentroidModel, ClassifierError, Prediction};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{ingest_path, Corpus, CorpusError, LabelPolicy, TestCase};
use crate::leakage::{detect_leaks, LeakageError};
use crate::metrics::{
    bias_gap, confusion, f1_per_category, render_report, BiasAuditReport, ConfigEcho,
    EvalSetScores, GapTable, MetricsError,
};
use crate::rng::{fnv1a64, stage_seed};
use crate::split::{
    build_experiment1, build_experiment2, split_originals, verify_group_integrity, SplitError,
    SplitPlan,
};

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Leakage(#[from] LeakageError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A pipeline failure, tagged with the stage that raised it. Artifacts
/// written before the failure are left in place for debugging.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: StageError,
}

fn at<E: Into<StageError>>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError { stage, source: e.into() }
}

/// What a full `audit` run produced.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: BiasAuditReport,
    pub leaks_found: bool,
    pub artifacts: Vec<PathBuf>,
}

/// One artifact entry in `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub fnv1a64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub seed: u64,
    pub config_hash: String,
    pub artifacts: Vec<ManifestEntry>,
}

/// Collects artifacts under one directory and tracks digests for the
/// manifest.
pub struct ArtifactSink {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl ArtifactSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, std::io::Error> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, entries: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, std::io::Error> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            fnv1a64: format!("{:016x}", fnv1a64(bytes)),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, std::io::Error> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, std::io::Error> {
        let mut bytes = Vec::new();
        for row in rows {
            serde_json::to_writer(&mut bytes, row)?;
            bytes.push(b'\n');
        }
        self.write(name, &bytes)
    }

    /// Write `manifest.json` covering everything written so far.
    pub fn finish(mut self, seed: u64, config_hash: &str) -> Result<Vec<PathBuf>, std::io::Error> {
        let manifest = Manifest {
            schema: crate::metrics::REPORT_SCHEMA.to_string(),
            seed,
            config_hash: config_hash.to_string(),
            artifacts: std::mem::take(&mut self.entries),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, &bytes)?;
        let mut paths: Vec<PathBuf> =
            manifest.artifacts.iter().map(|e| self.dir.join(&e.path)).collect();
        paths.push(path);
        Ok(paths)
    }
}

/// File name used for prediction artifacts of one evaluation set.
pub fn predictions_file_name(set_name: &str) -> String {
    let slug: String = set_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    format!("predictions_{slug}.jsonl")
}

fn cases_for(corpus: &Corpus, ids: &[String]) -> Vec<TestCase> {
    // Plan membership was validated earlier; missing ids cannot occur here.
    ids.iter().map(|id| corpus.get(id).expect("plan id exists").clone()).collect()
}

fn gold_pairs(cases: &[TestCase]) -> Vec<(String, String)> {
    cases.iter().map(|c| (c.id.clone(), c.category.clone())).collect()
}

fn predicted_pairs(predictions: &[Prediction]) -> Vec<(String, String)> {
    predictions.iter().map(|p| (p.id.clone(), p.category.clone())).collect()
}

/// Run the whole audit. Exit-status semantics live in the CLI; here leaks
/// are reported, not fatal.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutcome, PipelineError> {
    // A missing dataset is an ingest failure; everything else is config.
    config.validate().map_err(|e| match e {
        ConfigError::MissingCorpus(_) => at("ingest")(e),
        other => at("config")(other),
    })?;
    let config_hash = config.digest();
    let seed = config.seed;
    let mut sink = ArtifactSink::new(&config.output.dir).map_err(at("output"))?;

    // ingest
    let policy = match &config.corpus.labels {
        Some(labels) => LabelPolicy::Closed(labels.clone()),
        None => LabelPolicy::Open,
    };
    let corpus = ingest_path(
        &config.corpus.path,
        config.corpus.format,
        &config.corpus.schema,
        policy,
    )
    .map_err(at("ingest"))?;

    // augment
    let augment_seed = stage_seed(seed, "augment");
    let (corpus, skips) = if config.augment.enabled {
        augment_corpus(&corpus, &config.augment.mutation, augment_seed).map_err(at("augment"))?
    } else {
        (corpus, Vec::new())
    };
    sink.write("corpus.jsonl", &corpus.export_bytes()).map_err(at("augment"))?;
    sink.write_jsonl("skips.jsonl", &skips).map_err(at("augment"))?;

    // split
    let split_seed = stage_seed(seed, "split");
    let origin_split =
        split_originals(&corpus, config.split.test_fraction, split_seed).map_err(at("split"))?;
    sink.write_json("origin_split.json", &origin_split).map_err(at("split"))?;
    let (plan_a, plan_b) = build_experiment1(&corpus, &origin_split).map_err(at("split"))?;
    let plan_e2 = build_experiment2(&corpus, &origin_split).map_err(at("split"))?;
    sink.write_json("plan_exp1_phase_a.json", &plan_a).map_err(at("split"))?;
    sink.write_json("plan_exp1_phase_b.json", &plan_b).map_err(at("split"))?;
    sink.write_json("plan_exp2.json", &plan_e2).map_err(at("split"))?;

    // integrity
    let mut integrity = BTreeMap::new();
    for plan in [&plan_a, &plan_b, &plan_e2] {
        let findings = verify_group_integrity(plan, &corpus).map_err(at("integrity"))?;
        integrity.insert(plan.protocol.as_str().to_string(), findings);
    }
    sink.write_json("integrity.json", &integrity).map_err(at("integrity"))?;

    // leakage lint over each protocol's leak-free pairs
    let mut leakage = BTreeMap::new();
    let mut leaks_found = false;
    for plan in [&plan_a, &plan_b, &plan_e2] {
        for &(train_name, eval_name) in plan.protocol.clean_pairs() {
            let train = plan.set(train_name).unwrap_or(&[][..]).to_vec();
            let eval = plan.set(eval_name).unwrap_or(&[][..]).to_vec();
            let findings = detect_leaks(
                &train,
                &eval,
                &corpus,
                config.leakage.threshold,
                config.leakage.window,
            )
            .map_err(at("leakcheck"))?;
            leaks_found |= !findings.is_empty();
            let scan = format!("{}:{train_name}->{eval_name}", plan.protocol.as_str());
            let slug: String = scan
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
                .collect();
            sink.write_jsonl(&format!("leaks_{slug}.jsonl"), &findings).map_err(at("leakcheck"))?;
            leakage.insert(scan, findings);
        }
    }

    // train + evaluate per protocol
    let labels = corpus.labels().to_vec();
    let eval_jobs: [(&str, &SplitPlan, &str, &str); 4] = [
        ("Exp1-PhaseA/test", &plan_a, "train", "test"),
        ("Exp1-PhaseB/test", &plan_b, "train", "test"),
        ("Exp2/test1", &plan_e2, "train", "test1"),
        ("Exp2/test2", &plan_e2, "train", "test2"),
    ];
    let mut eval_sets = Vec::new();
    for (set_name, plan, train_name, eval_name) in eval_jobs {
        let train_cases = cases_for(&corpus, plan.set(train_name).unwrap_or(&[][..]));
        let eval_cases = cases_for(&corpus, plan.set(eval_name).unwrap_or(&[][..]));
        let predictions = match config.classifier.backend {
            Backend::Builtin => {
                let model = CentroidModel::train(&train_cases, &labels).map_err(at("train"))?;
                model.predict_all(&eval_cases)
            }
            Backend::External => {
                let command = config
                    .classifier
                    .external_command
                    .as_deref()
                    .ok_or(ClassifierError::MissingCommand)
                    .map_err(at("train"))?;
                run_external(command, &train_cases, &eval_cases).map_err(at("evaluate"))?
            }
        };
        sink.write_jsonl(&predictions_file_name(set_name), &predictions).map_err(at("evaluate"))?;
        let scores = if eval_cases.is_empty() {
            EvalSetScores {
                name: set_name.to_string(),
                per_category_f1: labels.iter().map(|l| (l.clone(), 0.0)).collect(),
                macro_f1: 0.0,
            }
        } else {
            let table = confusion(&gold_pairs(&eval_cases), &predicted_pairs(&predictions), &labels)
                .map_err(at("metrics"))?;
            EvalSetScores::new(set_name, f1_per_category(&table)).map_err(at("metrics"))?
        };
        eval_sets.push(scores);
    }

    // gaps and report
    let mut report = BiasAuditReport::new(labels);
    report.eval_sets = eval_sets;
    for (name, set1, set2) in [
        ("Exp1", "Exp1-PhaseA/test", "Exp1-PhaseB/test"),
        ("Exp2", "Exp2/test1", "Exp2/test2"),
    ] {
        let s1 = report.eval_sets.iter().find(|s| s.name == set1).expect("set exists");
        let s2 = report.eval_sets.iter().find(|s| s.name == set2).expect("set exists");
        let values = bias_gap(&s1.per_category_f1, &s2.per_category_f1).map_err(at("metrics"))?;
        report.gaps.push(GapTable {
            name: name.to_string(),
            set1: set1.to_string(),
            set2: set2.to_string(),
            values,
        });
    }
    report.integrity = integrity;
    report.leakage = leakage;
    report.config = ConfigEcho {
        seed,
        stage_seeds: [
            ("augment".to_string(), augment_seed),
            ("split".to_string(), split_seed),
        ]
        .into(),
        test_fraction: config.split.test_fraction,
        mutation: config.augment.mutation.clone(),
        leakage_window: config.leakage.window,
        leakage_threshold: config.leakage.threshold,
        classifier: config.classifier.clone(),
        config_hash: config_hash.clone(),
    };

    for format in &config.output.formats {
        let bytes = render_report(&report, *format).map_err(at("report"))?;
        sink.write(&format!("report.{}", format.extension()), &bytes).map_err(at("report"))?;
    }

    let artifacts = sink.finish(seed, &config_hash).map_err(at("report"))?;
    Ok(PipelineOutcome { report, leaks_found, artifacts })
}
