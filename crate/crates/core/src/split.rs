//! Group-integral split protocols over an augmented corpus.
//!
//! Both protocols start from one stratified random partition of the
//! version-0 originals and never let an origin group (an original plus its
//! variants) span a train/test boundary, except for the second protocol's
//! deliberate variants-of-training-cases evaluation set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{category_counts, Corpus, CorpusError, CountsTable};
use crate::rng::{fnv1a64, SplitMix64};

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("test_fraction must be in (0, 1), got {0}")]
    DegenerateFraction(f64),
    #[error("category {category:?} has {count} originals; at least 2 are required")]
    TooFewOriginals { category: String, count: usize },
    #[error("category {category:?}: test fraction {fraction} would move all {count} originals to test")]
    DegenerateCategory { category: String, fraction: f64, count: usize },
    #[error("split references unknown id {0:?}")]
    UnknownId(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Stratified random partition of the version-0 originals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginSplit {
    pub train_origins: BTreeSet<String>,
    pub test_origins: BTreeSet<String>,
    pub seed: u64,
    pub test_fraction: f64,
}

/// Which experimental protocol produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "Exp1-PhaseA")]
    Exp1PhaseA,
    #[serde(rename = "Exp1-PhaseB")]
    Exp1PhaseB,
    #[serde(rename = "Exp2")]
    Exp2,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Exp1PhaseA => "Exp1-PhaseA",
            Protocol::Exp1PhaseB => "Exp1-PhaseB",
            Protocol::Exp2 => "Exp2",
        }
    }

    /// The train/eval set-name pairs that must stay leak-free under this
    /// protocol. Exp2's `test2` is excluded: it holds variants of training
    /// cases by construction.
    pub fn clean_pairs(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            Protocol::Exp1PhaseA | Protocol::Exp1PhaseB => &[("train", "test")],
            Protocol::Exp2 => &[("train", "test1")],
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named train/test(/test2) partitions of case ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    sets: BTreeMap<String, Vec<String>>,
    pub seed: u64,
    pub fraction: f64,
}

impl SplitPlan {
    pub fn new(protocol: Protocol, sets: BTreeMap<String, Vec<String>>, seed: u64, fraction: f64) -> Self {
        let mut plan = Self { protocol, sets, seed, fraction };
        for ids in plan.sets.values_mut() {
            ids.sort();
        }
        plan
    }

    pub fn sets(&self) -> &BTreeMap<String, Vec<String>> {
        &self.sets
    }

    pub fn set(&self, name: &str) -> Option<&[String]> {
        self.sets.get(name).map(Vec::as_slice)
    }

    pub fn set_names(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(String::as_str)
    }

    /// Move one id from `from` to `to`. Test hook for planting integrity
    /// violations; not part of any protocol.
    pub fn relocate(&mut self, id: &str, from: &str, to: &str) -> bool {
        let Some(src) = self.sets.get_mut(from) else { return false };
        let Some(pos) = src.iter().position(|x| x == id) else { return false };
        src.remove(pos);
        let dst = self.sets.entry(to.to_string()).or_default();
        dst.push(id.to_string());
        dst.sort();
        true
    }
}

/// Stratified-by-category random partition of the version-0 ids,
/// deterministic in `seed`. Per-category test count is round(fraction * n),
/// half-up, clamped to at least 1 and at most n - 1.
pub fn split_originals(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<OriginSplit, SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::DegenerateFraction(test_fraction));
    }
    let mut by_category: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for case in corpus.originals() {
        by_category.entry(case.category.as_str()).or_default().push(case.id.as_str());
    }
    let mut train = BTreeSet::new();
    let mut test = BTreeSet::new();
    for (category, mut origins) in by_category {
        let n = origins.len();
        if n < 2 {
            return Err(SplitError::TooFewOriginals { category: category.to_string(), count: n });
        }
        let want = (test_fraction * n as f64 + 0.5).floor() as usize;
        let take = want.max(1);
        if take >= n {
            return Err(SplitError::DegenerateCategory {
                category: category.to_string(),
                fraction: test_fraction,
                count: n,
            });
        }
        // Per-category stream keyed by the category name so the outcome does
        // not depend on category iteration order.
        origins.sort_unstable();
        let mut rng = SplitMix64::new(seed ^ fnv1a64(category.as_bytes()));
        rng.shuffle(&mut origins);
        for (i, id) in origins.into_iter().enumerate() {
            if i < take {
                test.insert(id.to_string());
            } else {
                train.insert(id.to_string());
            }
        }
    }
    Ok(OriginSplit { train_origins: train, test_origins: test, seed, test_fraction })
}

fn check_known(split: &OriginSplit, corpus: &Corpus) -> Result<(), SplitError> {
    for id in split.train_origins.iter().chain(&split.test_origins) {
        match corpus.get(id) {
            Some(case) if case.is_original() => {}
            _ => return Err(SplitError::UnknownId(id.clone())),
        }
    }
    Ok(())
}

fn with_variants(corpus: &Corpus, origins: &BTreeSet<String>) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for origin in origins {
        ids.push(origin.clone());
        ids.extend(corpus.variants_of(origin).iter().cloned());
    }
    ids
}

/// Phase A trains and tests on originals only; Phase B extends each side
/// with all variants of its origins.
pub fn build_experiment1(corpus: &Corpus, split: &OriginSplit) -> Result<(SplitPlan, SplitPlan), SplitError> {
    check_known(split, corpus)?;
    let mut a_sets = BTreeMap::new();
    a_sets.insert("train".to_string(), split.train_origins.iter().cloned().collect());
    a_sets.insert("test".to_string(), split.test_origins.iter().cloned().collect());
    let phase_a = SplitPlan::new(Protocol::Exp1PhaseA, a_sets, split.seed, split.test_fraction);

    let mut b_sets = BTreeMap::new();
    b_sets.insert("train".to_string(), with_variants(corpus, &split.train_origins));
    b_sets.insert("test".to_string(), with_variants(corpus, &split.test_origins));
    let phase_b = SplitPlan::new(Protocol::Exp1PhaseB, b_sets, split.seed, split.test_fraction);

    Ok((phase_a, phase_b))
}

/// Train on training originals; test1 holds unseen originals; test2 holds
/// every variant of a training origin.
pub fn build_experiment2(corpus: &Corpus, split: &OriginSplit) -> Result<SplitPlan, SplitError> {
    check_known(split, corpus)?;
    let mut sets = BTreeMap::new();
    sets.insert("train".to_string(), split.train_origins.iter().cloned().collect());
    sets.insert("test1".to_string(), split.test_origins.iter().cloned().collect());
    let test2: Vec<String> = split
        .train_origins
        .iter()
        .flat_map(|o| corpus.variants_of(o).iter().cloned())
        .collect();
    sets.insert("test2".to_string(), test2);
    Ok(SplitPlan::new(Protocol::Exp2, sets, split.seed, split.test_fraction))
}

/// One group-integrity violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityViolation {
    pub origin_id: String,
    pub case_id: String,
    pub message: String,
}

/// Findings from [`verify_group_integrity`]; empty means the plan honors its
/// protocol's grouping rules.
pub type IntegrityReport = Vec<IntegrityViolation>;

/// Check a plan against its protocol's grouping rules.
pub fn verify_group_integrity(plan: &SplitPlan, corpus: &Corpus) -> Result<IntegrityReport, SplitError> {
    for ids in plan.sets().values() {
        for id in ids {
            if !corpus.contains(id) {
                return Err(SplitError::UnknownId(id.clone()));
            }
        }
    }
    let origin_of = |id: &str| -> String { corpus.get(id).unwrap().origin_id.clone() };
    let mut report = Vec::new();
    match plan.protocol {
        Protocol::Exp1PhaseA | Protocol::Exp1PhaseB => {
            let empty = Vec::new();
            let train = plan.set("train").unwrap_or(&empty);
            let test = plan.set("test").unwrap_or(&empty);
            let train_groups: BTreeSet<String> = train.iter().map(|id| origin_of(id)).collect();
            for id in test {
                let origin = origin_of(id);
                if train_groups.contains(&origin) {
                    report.push(IntegrityViolation {
                        origin_id: origin.clone(),
                        case_id: id.clone(),
                        message: format!("origin group {origin:?} spans train and test"),
                    });
                }
            }
        }
        Protocol::Exp2 => {
            let empty = Vec::new();
            let train = plan.set("train").unwrap_or(&empty);
            let test1 = plan.set("test1").unwrap_or(&empty);
            let test2 = plan.set("test2").unwrap_or(&empty);
            let train_set: BTreeSet<&str> = train.iter().map(String::as_str).collect();
            for id in test1 {
                if train_set.contains(id.as_str()) {
                    report.push(IntegrityViolation {
                        origin_id: origin_of(id),
                        case_id: id.clone(),
                        message: format!("test1 origin {id:?} also appears in train"),
                    });
                }
            }
            for id in test2 {
                let case = corpus.get(id).unwrap();
                if case.is_original() {
                    report.push(IntegrityViolation {
                        origin_id: case.origin_id.clone(),
                        case_id: id.clone(),
                        message: format!("test2 contains version-0 case {id:?}"),
                    });
                } else if !train_set.contains(case.origin_id.as_str()) {
                    report.push(IntegrityViolation {
                        origin_id: case.origin_id.clone(),
                        case_id: id.clone(),
                        message: format!(
                            "test2 member {id:?} has origin {:?} outside train",
                            case.origin_id
                        ),
                    });
                }
            }
            for (set_name, ids) in [("train", train), ("test1", test1)] {
                for id in ids {
                    let case = corpus.get(id).unwrap();
                    if !case.is_original() {
                        report.push(IntegrityViolation {
                            origin_id: case.origin_id.clone(),
                            case_id: id.clone(),
                            message: format!("{set_name} contains variant {id:?}"),
                        });
                    }
                }
            }
        }
    }
    report.sort_by(|a, b| (&a.origin_id, &a.case_id).cmp(&(&b.origin_id, &b.case_id)));
    Ok(report)
}

/// Mismatch between a plan's actual counts and externally supplied expected
/// counts (e.g. figures published for a dataset).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMismatch {
    pub category: String,
    pub set: String,
    pub version: u32,
    pub expected: u64,
    pub actual: u64,
}

/// Compare per-cell counts of a plan against expected values. Published
/// tables sometimes disagree with what a stated protocol can produce; this
/// surfaces each such cell as a warning rather than an error.
pub fn check_expected_counts(
    plan: &SplitPlan,
    corpus: &Corpus,
    expected: &[(String, String, u32, u64)],
) -> Result<Vec<CountMismatch>, SplitError> {
    let table: CountsTable = category_counts(corpus, Some(plan))?;
    let mut out = Vec::new();
    for (category, set, version, want) in expected {
        let got = table.count(category, set, *version);
        if got != *want {
            out.push(CountMismatch {
                category: category.clone(),
                set: set.clone(),
                version: *version,
                expected: *want,
                actual: got,
            });
        }
    }
    Ok(out)
}
