//! `augaudit`: audit augmentation-induced bias in test-code datasets.
//!
//! Every stage of the pipeline is also a standalone subcommand whose outputs
//! feed the next stage, so `audit` is exactly the composition of `ingest`,
//! `augment`, `split`, `leakcheck`, `train`, `evaluate`, and `report`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use augaudit_core::classifier::Backend;
use augaudit_core::config::RunConfig;
use augaudit_core::corpus::{self, Corpus, LabelPolicy, SchemaMap, SourceFormat};
use augaudit_core::leakage::detect_leaks;
use augaudit_core::metrics::{
    confusion, f1_per_category, macro_f1, render_report, BiasAuditReport, ReportFormat,
};
use augaudit_core::pipeline::{predictions_file_name, run_pipeline, ArtifactSink};
use augaudit_core::rng::stage_seed;
use augaudit_core::split::{build_experiment1, build_experiment2, split_originals, verify_group_integrity, SplitPlan};
use augaudit_core::{augment_corpus, run_external, CentroidModel, Prediction};

const ENV_SEED: &str = "AUGAUDIT_SEED";

#[derive(Parser)]
#[command(name = "augaudit", version, about = "Audit augmentation-induced bias in test-code datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SeedArg {
    /// Global seed; overrides the AUGAUDIT_SEED environment variable.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self, config_seed: Option<u64>) -> Result<u64> {
        if let Some(seed) = self.seed {
            return Ok(seed);
        }
        if let Ok(var) = std::env::var(ENV_SEED) {
            return var
                .parse()
                .with_context(|| format!("{ENV_SEED} must be a 64-bit unsigned integer, got {var:?}"));
        }
        Ok(config_seed.unwrap_or(0))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL/CSV dataset and write it in canonical form.
    Ingest {
        /// Input dataset (JSONL or CSV).
        #[arg(long)]
        input: PathBuf,
        /// Input format; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        /// Column map, e.g. id=test_id,category=label,code=body.
        #[arg(long)]
        schema: Option<String>,
        /// Closed label set in order, comma separated. Open when omitted.
        #[arg(long)]
        labels: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Expand every original with mutation-based variants.
    Augment {
        /// Canonical corpus JSONL.
        #[arg(long)]
        corpus: PathBuf,
        /// Pipeline config supplying the augment section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Build both experiment protocols from an augmented corpus.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        /// Fraction of originals reserved for testing, per category.
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Lint a split plan for cross-split variant leakage. Exits 3 when
    /// leaks are found.
    Leakcheck {
        #[arg(long)]
        corpus: PathBuf,
        /// Split plan JSON produced by `split` or `audit`.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        /// Override the scanned pair as `train,test1`; defaults to the
        /// plan protocol's leak-free pairs.
        #[arg(long)]
        sets: Option<String>,
        /// Write findings here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the builtin nearest-centroid baseline on one plan set.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Plan set to train on.
        #[arg(long, default_value = "train")]
        set: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Predict one evaluation set and score it.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Plan set to evaluate.
        #[arg(long, default_value = "test")]
        eval_set: String,
        /// Model file from `train`; when omitted a model is trained from
        /// --train-set on the fly.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        train_set: String,
        /// Pipeline config supplying the classifier section (external
        /// backends train per evaluation and ignore --model).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also report the support-weighted F1 average.
        #[arg(long)]
        weighted: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the full pipeline: ingest, augment, split, verify, lint, train,
    /// evaluate, report.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Additionally exit 3 when the lint finds cross-split leaks.
        #[arg(long)]
        lint: bool,
    },
    /// Re-render an existing report.json in another format.
    Report {
        /// Report JSON produced by `audit`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_corpus(path: &Path, policy: LabelPolicy) -> Result<Corpus> {
    corpus::ingest_path(path, None, &SchemaMap::identity(), policy)
        .with_context(|| format!("loading corpus {}", path.display()))
}

fn load_plan(path: &Path) -> Result<SplitPlan> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading plan {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn parse_labels(labels: Option<&str>) -> LabelPolicy {
    match labels {
        Some(spec) => LabelPolicy::Closed(
            spec.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        ),
        None => LabelPolicy::Open,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { input, format, schema, labels, out } => {
            let format = format.map(|f| f.parse::<SourceFormat>()).transpose()?;
            let schema = schema.map(|s| SchemaMap::parse(&s)).transpose()?.unwrap_or_default();
            let corpus = corpus::ingest_path(&input, format, &schema, parse_labels(labels.as_deref()))
                .with_context(|| format!("ingesting {}", input.display()))?;
            let mut sink = ArtifactSink::new(&out)?;
            sink.write("corpus.jsonl", &corpus.export_bytes())?;
            println!(
                "ingested {} cases ({} originals, {} labels) -> {}",
                corpus.len(),
                corpus.originals().count(),
                corpus.labels().len(),
                out.join("corpus.jsonl").display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Augment { corpus: corpus_path, config, seed, out } => {
            let run_config = load_run_config(config.as_deref())?;
            let global = seed.resolve(Some(run_config.seed))?;
            let corpus = load_corpus(&corpus_path, LabelPolicy::Open)?;
            let (augmented, skips) =
                augment_corpus(&corpus, &run_config.augment.mutation, stage_seed(global, "augment"))?;
            let mut sink = ArtifactSink::new(&out)?;
            sink.write("corpus.jsonl", &augmented.export_bytes())?;
            sink.write_jsonl("skips.jsonl", &skips)?;
            println!(
                "augmented {} originals -> {} cases, {} skipped",
                corpus.originals().count(),
                augmented.len(),
                skips.len()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Split { corpus: corpus_path, fraction, seed, out } => {
            let global = seed.resolve(None)?;
            let corpus = load_corpus(&corpus_path, LabelPolicy::Open)?;
            let origin_split = split_originals(&corpus, fraction, stage_seed(global, "split"))?;
            let (plan_a, plan_b) = build_experiment1(&corpus, &origin_split)?;
            let plan_e2 = build_experiment2(&corpus, &origin_split)?;
            let mut integrity = BTreeMap::new();
            for plan in [&plan_a, &plan_b, &plan_e2] {
                integrity.insert(
                    plan.protocol.as_str().to_string(),
                    verify_group_integrity(plan, &corpus)?,
                );
            }
            let mut sink = ArtifactSink::new(&out)?;
            sink.write_json("origin_split.json", &origin_split)?;
            sink.write_json("plan_exp1_phase_a.json", &plan_a)?;
            sink.write_json("plan_exp1_phase_b.json", &plan_b)?;
            sink.write_json("plan_exp2.json", &plan_e2)?;
            sink.write_json("integrity.json", &integrity)?;
            let violations: usize = integrity.values().map(Vec::len).sum();
            println!(
                "split {} origins into train {} / test {} (fraction {fraction}); {violations} integrity violations",
                origin_split.train_origins.len() + origin_split.test_origins.len(),
                origin_split.train_origins.len(),
                origin_split.test_origins.len(),
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Leakcheck { corpus: corpus_path, plan, window, threshold, sets, out } => {
            let corpus = load_corpus(&corpus_path, LabelPolicy::Open)?;
            let plan = load_plan(&plan)?;
            let pairs: Vec<(String, String)> = match sets {
                Some(spec) => {
                    let (a, b) = spec
                        .split_once(',')
                        .with_context(|| format!("--sets expects two names like train,test1; got {spec:?}"))?;
                    vec![(a.trim().to_string(), b.trim().to_string())]
                }
                None => plan
                    .protocol
                    .clean_pairs()
                    .iter()
                    .map(|&(a, b)| (a.to_string(), b.to_string()))
                    .collect(),
            };
            let mut all = Vec::new();
            for (train_name, eval_name) in &pairs {
                let get = |name: &str| -> Result<Vec<String>> {
                    plan.set(name)
                        .map(<[String]>::to_vec)
                        .with_context(|| format!("plan has no set named {name:?}"))
                };
                let findings =
                    detect_leaks(&get(train_name)?, &get(eval_name)?, &corpus, threshold, window)?;
                all.extend(findings);
            }
            let mut bytes = Vec::new();
            for finding in &all {
                serde_json::to_writer(&mut bytes, finding)?;
                bytes.push(b'\n');
            }
            match out {
                Some(dir) => {
                    let mut sink = ArtifactSink::new(&dir)?;
                    sink.write("leaks.jsonl", &bytes)?;
                }
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
            if all.is_empty() {
                eprintln!("leakcheck: clean ({} pair scans)", pairs.len());
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("leakcheck: {} leaking pairs found", all.len());
                Ok(ExitCode::from(3))
            }
        }

        Command::Train { corpus: corpus_path, plan, set, out } => {
            let corpus = load_corpus(&corpus_path, LabelPolicy::Open)?;
            let plan = load_plan(&plan)?;
            let ids = plan
                .set(&set)
                .with_context(|| format!("plan has no set named {set:?}"))?;
            let cases: Vec<_> = ids
                .iter()
                .map(|id| {
                    corpus
                        .get(id)
                        .cloned()
                        .with_context(|| format!("plan id {id:?} not in corpus"))
                })
                .collect::<Result<_>>()?;
            let model = CentroidModel::train(&cases, corpus.labels())?;
            let mut sink = ArtifactSink::new(&out)?;
            sink.write_json("model.json", &model)?;
            println!(
                "trained centroid model on {} cases over {} labels -> {}",
                cases.len(),
                model.labels().len(),
                out.join("model.json").display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Evaluate { corpus: corpus_path, plan, eval_set, model, train_set, config, weighted, out } => {
            let run_config = load_run_config(config.as_deref())?;
            let corpus = load_corpus(&corpus_path, LabelPolicy::Open)?;
            let plan = load_plan(&plan)?;
            let collect = |name: &str| -> Result<Vec<_>> {
                let ids = plan
                    .set(name)
                    .with_context(|| format!("plan has no set named {name:?}"))?;
                ids.iter()
                    .map(|id| {
                        corpus
                            .get(id)
                            .cloned()
                            .with_context(|| format!("plan id {id:?} not in corpus"))
                    })
                    .collect()
            };
            let eval_cases = collect(&eval_set)?;
            let predictions: Vec<Prediction> = match run_config.classifier.backend {
                Backend::External => {
                    let command = run_config
                        .classifier
                        .external_command
                        .as_deref()
                        .context("classifier.backend is external but no external_command is set")?;
                    run_external(command, &collect(&train_set)?, &eval_cases)?
                }
                Backend::Builtin => {
                    let model = match model {
                        Some(path) => {
                            let text = std::fs::read_to_string(&path)
                                .with_context(|| format!("reading model {}", path.display()))?;
                            serde_json::from_str(&text)
                                .with_context(|| format!("parsing model {}", path.display()))?
                        }
                        None => CentroidModel::train(&collect(&train_set)?, corpus.labels())?,
                    };
                    model.predict_all(&eval_cases)
                }
            };
            let gold: Vec<(String, String)> =
                eval_cases.iter().map(|c| (c.id.clone(), c.category.clone())).collect();
            let predicted: Vec<(String, String)> =
                predictions.iter().map(|p| (p.id.clone(), p.category.clone())).collect();
            let labels = corpus.labels().to_vec();
            let table = confusion(&gold, &predicted, &labels)?;
            let per_category = f1_per_category(&table);
            let macro_avg = macro_f1(&per_category)?;
            let weighted_avg = weighted
                .then(|| augaudit_core::metrics::weighted_f1(&per_category, &table))
                .transpose()?;
            let mut sink = ArtifactSink::new(&out)?;
            sink.write_jsonl(&predictions_file_name(&eval_set), &predictions)?;
            #[derive(serde::Serialize)]
            struct EvalArtifact {
                set: String,
                confusion: augaudit_core::ConfusionTable,
                per_category_f1: BTreeMap<String, f64>,
                macro_f1: f64,
                #[serde(skip_serializing_if = "Option::is_none")]
                weighted_f1: Option<f64>,
            }
            sink.write_json(
                &format!("metrics_{eval_set}.json"),
                &EvalArtifact {
                    set: eval_set.clone(),
                    confusion: table,
                    per_category_f1: per_category,
                    macro_f1: macro_avg,
                    weighted_f1: weighted_avg,
                },
            )?;
            match weighted_avg {
                Some(w) => println!(
                    "evaluated {} cases on {eval_set}: macro F1 {macro_avg:.4}, weighted F1 {w:.4}",
                    eval_cases.len()
                ),
                None => println!("evaluated {} cases on {eval_set}: macro F1 {macro_avg:.4}", eval_cases.len()),
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Audit { config, seed, out, lint } => {
            let mut run_config = RunConfig::load(&config)?;
            run_config.seed = seed.resolve(Some(run_config.seed))?;
            if let Some(dir) = out {
                run_config.output.dir = dir;
            }
            let outcome = run_pipeline(&run_config)?;
            let violations: usize = outcome.report.integrity.values().map(Vec::len).sum();
            let leaks: usize = outcome.report.leakage.values().map(Vec::len).sum();
            for set in &outcome.report.eval_sets {
                println!("{}: macro F1 {:.4}", set.name, set.macro_f1);
            }
            for gap in &outcome.report.gaps {
                println!("{}: average gap {:+.4} ({} vs {})", gap.name, gap.values.average, gap.set2, gap.set1);
            }
            println!(
                "integrity violations: {violations}; leaking pairs: {leaks}; artifacts: {}",
                run_config.output.dir.display()
            );
            if lint && outcome.leaks_found {
                Ok(ExitCode::from(3))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }

        Command::Report { report, format, out } => {
            let format: ReportFormat = format.parse()?;
            let text = std::fs::read_to_string(&report)
                .with_context(|| format!("reading report {}", report.display()))?;
            let parsed: BiasAuditReport = serde_json::from_str(&text)
                .with_context(|| format!("parsing report {}", report.display()))?;
            let bytes = render_report(&parsed, format)?;
            match out {
                Some(path) => {
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    std::fs::write(&path, &bytes)?;
                }
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
