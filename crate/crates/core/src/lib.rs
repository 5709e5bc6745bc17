//! Audit augmentation-induced bias in labeled test-code datasets.
//!
//! The pipeline: ingest a corpus, expand it with mutation-based variants,
//! build group-integral split protocols, lint for variant leakage, train a
//! deterministic baseline classifier (or drive an external one), and report
//! per-category F1 together with the bias gap between evaluation sets.

pub mod augment;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod leakage;
pub mod lexer;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod split;
pub mod synth;

pub use augment::{augment_corpus, MutationConfig, MutationPlan, SkipRecord};
pub use classifier::{featurize, run_external, CentroidModel, ClassifierConfig, Prediction};
pub use config::RunConfig;
pub use pipeline::{run_pipeline, PipelineError, PipelineOutcome};
pub use corpus::{category_counts, ingest, Corpus, CountsTable, LabelPolicy, SchemaMap, TestCase};
pub use leakage::{detect_leaks, fingerprint, similarity, Fingerprint, LeakFinding};
pub use metrics::{
    bias_gap, confusion, f1_per_category, macro_f1, render_report, BiasAuditReport,
    ConfusionTable, ReportFormat,
};
pub use split::{
    build_experiment1, build_experiment2, split_originals, verify_group_integrity, OriginSplit,
    Protocol, SplitPlan,
};
