//! Labeled test-code datasets with explicit augmentation provenance.
//!
//! A corpus holds original cases (version 0) and augmented variants
//! (version >= 1) that point back at their origin. Provenance is one level
//! deep: variants of variants are rejected. Canonical order everywhere is
//! lexicographic by id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::split::SplitPlan;

/// Flaky-test category preset used by the bundled example datasets.
pub const FLAKY_LABELS: &[&str] = &["Async", "UC", "Conc", "Time", "TOD"];

/// One code sample with its label and augmentation lineage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub origin_id: String,
    pub version: u32,
    pub category: String,
    pub code: String,
}

impl TestCase {
    /// A version-0 original whose origin is itself.
    pub fn original(id: impl Into<String>, category: impl Into<String>, code: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            origin_id: id.clone(),
            id,
            version: 0,
            category: category.into(),
            code: code.into(),
        }
    }

    pub fn is_original(&self) -> bool {
        self.version == 0
    }
}

/// How the corpus label set is determined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelPolicy {
    /// Labels learned from the data, ordered lexicographically.
    #[default]
    Open,
    /// Fixed label set in the given order; unknown categories are errors.
    Closed(Vec<String>),
}

impl LabelPolicy {
    /// The flaky-test preset (Async, UC, Conc, Time, TOD).
    pub fn flaky_preset() -> Self {
        LabelPolicy::Closed(FLAKY_LABELS.iter().map(|s| s.to_string()).collect())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("dangling variant {id:?}: origin {origin_id:?} not present as a version-0 case")]
    DanglingVariant { id: String, origin_id: String },
    #[error("unknown category {category:?} for case {id:?} (closed label set)")]
    UnknownCategory { id: String, category: String },
    #[error("case {id:?} has version 0 but origin_id {origin_id:?} differs from its id")]
    OriginMismatch { id: String, origin_id: String },
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("variant {id:?} must have version >= 1")]
    NotAVariant { id: String },
    #[error("variant {id:?} category {got:?} differs from origin category {want:?}")]
    CategoryMismatch { id: String, got: String, want: String },
    #[error("unknown id {0:?} in partition")]
    UnknownId(String),
    #[error("unsupported input format {0:?} (expected jsonl or csv)")]
    UnsupportedFormat(String),
    #[error("schema maps unknown field {0:?} (expected id, origin_id, version, category, code)")]
    UnknownSchemaField(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One invariant violation found by [`Corpus::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub case_id: String,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    DuplicateId,
    OriginMismatch,
    DanglingVariant,
    UnknownCategory,
    ProvenanceDrift,
}

/// Validated, immutable collection of cases plus an origin -> variants index.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    cases: Vec<TestCase>,
    by_id: BTreeMap<String, usize>,
    labels: Vec<String>,
    policy: LabelPolicy,
    provenance: BTreeMap<String, Vec<String>>,
}

impl Corpus {
    /// Build a corpus and enforce every invariant, failing on the first
    /// violation. Use [`Corpus::from_cases_unchecked`] + [`Corpus::validate`]
    /// to inspect broken data instead.
    pub fn from_cases(cases: Vec<TestCase>, policy: LabelPolicy) -> Result<Self, CorpusError> {
        let corpus = Self::from_cases_unchecked(cases, policy);
        if let Some(v) = corpus.validate().into_iter().next() {
            return Err(match v.kind {
                ViolationKind::DuplicateId => CorpusError::DuplicateId(v.case_id),
                ViolationKind::OriginMismatch => {
                    let origin_id = corpus.get(&v.case_id).map_or_else(String::new, |c| c.origin_id.clone());
                    CorpusError::OriginMismatch { id: v.case_id, origin_id }
                }
                ViolationKind::DanglingVariant => {
                    let origin_id = corpus.get(&v.case_id).map_or_else(String::new, |c| c.origin_id.clone());
                    CorpusError::DanglingVariant { id: v.case_id, origin_id }
                }
                ViolationKind::UnknownCategory => {
                    let category = corpus.get(&v.case_id).map_or_else(String::new, |c| c.category.clone());
                    CorpusError::UnknownCategory { id: v.case_id, category }
                }
                // Cannot occur from from_cases_unchecked: provenance is rebuilt there.
                ViolationKind::ProvenanceDrift => CorpusError::DuplicateId(v.case_id),
            });
        }
        Ok(corpus)
    }

    /// Build without enforcing invariants. Cases are put in canonical order
    /// (by id, insertion order among duplicates) and provenance is rebuilt.
    pub fn from_cases_unchecked(mut cases: Vec<TestCase>, policy: LabelPolicy) -> Self {
        cases.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = BTreeMap::new();
        for (i, case) in cases.iter().enumerate() {
            by_id.entry(case.id.clone()).or_insert(i);
        }
        let labels = match &policy {
            LabelPolicy::Open => {
                let set: BTreeSet<&str> = cases.iter().map(|c| c.category.as_str()).collect();
                set.into_iter().map(String::from).collect()
            }
            LabelPolicy::Closed(labels) => labels.clone(),
        };
        let mut provenance: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for case in &cases {
            if case.version >= 1 {
                provenance
                    .entry(case.origin_id.clone())
                    .or_default()
                    .push(case.id.clone());
            }
        }
        for variants in provenance.values_mut() {
            variants.sort_by(|a, b| {
                let va = by_id.get(a).map_or(0, |&i| cases[i].version);
                let vb = by_id.get(b).map_or(0, |&i| cases[i].version);
                va.cmp(&vb).then_with(|| a.cmp(b))
            });
        }
        Self { cases, by_id, labels, policy, provenance }
    }

    /// List every invariant violation. Empty means valid. Never mutates.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for case in &self.cases {
            if !seen.insert(&case.id) {
                out.push(Violation {
                    case_id: case.id.clone(),
                    kind: ViolationKind::DuplicateId,
                    message: format!("id {:?} appears more than once", case.id),
                });
                continue;
            }
            if case.version == 0 && case.origin_id != case.id {
                out.push(Violation {
                    case_id: case.id.clone(),
                    kind: ViolationKind::OriginMismatch,
                    message: format!("version 0 but origin_id is {:?}", case.origin_id),
                });
            }
            if case.version >= 1 {
                let origin_ok = self
                    .get(&case.origin_id)
                    .is_some_and(|origin| origin.version == 0);
                if !origin_ok {
                    out.push(Violation {
                        case_id: case.id.clone(),
                        kind: ViolationKind::DanglingVariant,
                        message: format!("origin {:?} not present as a version-0 case", case.origin_id),
                    });
                }
            }
            if matches!(self.policy, LabelPolicy::Closed(_))
                && !self.labels.iter().any(|l| l == &case.category)
            {
                out.push(Violation {
                    case_id: case.id.clone(),
                    kind: ViolationKind::UnknownCategory,
                    message: format!("category {:?} not in the configured label set", case.category),
                });
            }
        }
        // Provenance must list exactly the variants present.
        let rebuilt = Self::from_cases_unchecked(self.cases.clone(), self.policy.clone());
        if rebuilt.provenance != self.provenance {
            out.push(Violation {
                case_id: String::new(),
                kind: ViolationKind::ProvenanceDrift,
                message: "provenance index does not match the variants present".to_string(),
            });
        }
        out
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Cases in canonical (id) order.
    pub fn cases(&self) -> &[TestCase] {
        &self.cases
    }

    pub fn get(&self, id: &str) -> Option<&TestCase> {
        self.by_id.get(id).map(|&i| &self.cases[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Ordered label set.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_policy(&self) -> &LabelPolicy {
        &self.policy
    }

    /// Variant ids of `origin_id`, ordered by version then id.
    pub fn variants_of(&self, origin_id: &str) -> &[String] {
        self.provenance.get(origin_id).map_or(&[], Vec::as_slice)
    }

    /// Origin -> variant-ids index.
    pub fn provenance(&self) -> &BTreeMap<String, Vec<String>> {
        &self.provenance
    }

    /// Version-0 cases in canonical order.
    pub fn originals(&self) -> impl Iterator<Item = &TestCase> {
        self.cases.iter().filter(|c| c.is_original())
    }

    /// Add one variant, returning the extended corpus. The category is copied
    /// from the origin when the variant's is empty.
    pub fn register_variant(&self, mut variant: TestCase) -> Result<Self, CorpusError> {
        if variant.version < 1 {
            return Err(CorpusError::NotAVariant { id: variant.id });
        }
        if self.contains(&variant.id) {
            return Err(CorpusError::DuplicateId(variant.id));
        }
        let origin = self
            .get(&variant.origin_id)
            .filter(|o| o.version == 0)
            .ok_or_else(|| CorpusError::DanglingVariant {
                id: variant.id.clone(),
                origin_id: variant.origin_id.clone(),
            })?;
        if variant.category.is_empty() {
            variant.category = origin.category.clone();
        } else if variant.category != origin.category {
            return Err(CorpusError::CategoryMismatch {
                id: variant.id,
                got: variant.category,
                want: origin.category.clone(),
            });
        }
        let mut cases = self.cases.clone();
        cases.push(variant);
        Corpus::from_cases(cases, self.policy.clone())
    }

    /// Write canonical-ordered JSONL.
    pub fn export(&self, mut w: impl Write) -> Result<(), CorpusError> {
        for case in &self.cases {
            serde_json::to_writer(&mut w, case).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Canonical JSONL as bytes.
    pub fn export_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.export(&mut buf).expect("writing to Vec cannot fail");
        buf
    }
}

/// Maps TestCase field names to source column/key names. Unmapped fields use
/// their own name. Missing `version`/`origin_id` in a record default to
/// 0/self.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaMap(pub BTreeMap<String, String>);

impl SchemaMap {
    const FIELDS: &'static [&'static str] = &["id", "origin_id", "version", "category", "code"];

    pub fn identity() -> Self {
        Self::default()
    }

    /// Parse `field=column` pairs separated by commas.
    pub fn parse(spec: &str) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for pair in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (field, column) = pair
                .split_once('=')
                .ok_or_else(|| CorpusError::UnknownSchemaField(pair.to_string()))?;
            let field = field.trim();
            if !Self::FIELDS.contains(&field) {
                return Err(CorpusError::UnknownSchemaField(field.to_string()));
            }
            map.insert(field.to_string(), column.trim().to_string());
        }
        Ok(Self(map))
    }

    fn column<'a>(&'a self, field: &'a str) -> &'a str {
        self.0.get(field).map_or(field, String::as_str)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        for field in self.0.keys() {
            if !Self::FIELDS.contains(&field.as_str()) {
                return Err(CorpusError::UnknownSchemaField(field.clone()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SchemaMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (field, column) in &self.0 {
            if !first {
                f.write_str(",")?;
            }
            write!(f, "{field}={column}")?;
            first = false;
        }
        Ok(())
    }
}

/// Input format for [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for SourceFormat {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(SourceFormat::Jsonl),
            "csv" => Ok(SourceFormat::Csv),
            other => Err(CorpusError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Ingest a JSONL or CSV dataset into a validated corpus.
pub fn ingest(
    reader: impl Read,
    format: SourceFormat,
    schema: &SchemaMap,
    policy: LabelPolicy,
) -> Result<Corpus, CorpusError> {
    schema.validate()?;
    let cases = match format {
        SourceFormat::Jsonl => read_jsonl(reader, schema)?,
        SourceFormat::Csv => read_csv(reader, schema)?,
    };
    Corpus::from_cases(cases, policy)
}

/// Ingest from a file path, picking the format from the extension unless
/// `format` is given (`.csv` means CSV, anything else JSONL).
pub fn ingest_path(
    path: impl AsRef<Path>,
    format: Option<SourceFormat>,
    schema: &SchemaMap,
    policy: LabelPolicy,
) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let format = format.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => SourceFormat::Csv,
            _ => SourceFormat::Jsonl,
        }
    });
    let file = std::fs::File::open(path)?;
    ingest(BufReader::new(file), format, schema, policy)
}

fn read_jsonl(reader: impl Read, schema: &SchemaMap) -> Result<Vec<TestCase>, CorpusError> {
    let mut cases = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRow {
                line: line_no,
                message: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::MalformedRow {
            line: line_no,
            message: "expected a JSON object".to_string(),
        })?;
        let field = |name: &str| -> Option<&serde_json::Value> { obj.get(schema.column(name)) };
        let text = |name: &str| -> Result<Option<String>, CorpusError> {
            match field(name) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                Some(other) => Err(CorpusError::MalformedRow {
                    line: line_no,
                    message: format!("field {name:?} must be a string, got {other}"),
                }),
            }
        };
        let id = text("id")?.ok_or_else(|| CorpusError::MalformedRow {
            line: line_no,
            message: "missing field \"id\"".to_string(),
        })?;
        let category = text("category")?.ok_or_else(|| CorpusError::MalformedRow {
            line: line_no,
            message: "missing field \"category\"".to_string(),
        })?;
        let code = text("code")?.ok_or_else(|| CorpusError::MalformedRow {
            line: line_no,
            message: "missing field \"code\"".to_string(),
        })?;
        let version = match field("version") {
            None | Some(serde_json::Value::Null) => 0,
            Some(v) => v
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| CorpusError::MalformedRow {
                    line: line_no,
                    message: format!("field \"version\" must be a non-negative integer, got {v}"),
                })?,
        };
        let origin_id = text("origin_id")?.unwrap_or_else(|| id.clone());
        cases.push(TestCase { id, origin_id, version, category, code });
    }
    Ok(cases)
}

fn read_csv(reader: impl Read, schema: &SchemaMap) -> Result<Vec<TestCase>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::MalformedRow { line: 1, message: e.to_string() })?
        .clone();
    let col = |name: &str| -> Option<usize> {
        let want = schema.column(name);
        headers.iter().position(|h| h == want)
    };
    let id_col = col("id").ok_or_else(|| CorpusError::MalformedRow {
        line: 1,
        message: format!("missing column {:?}", schema.column("id")),
    })?;
    let category_col = col("category").ok_or_else(|| CorpusError::MalformedRow {
        line: 1,
        message: format!("missing column {:?}", schema.column("category")),
    })?;
    let code_col = col("code").ok_or_else(|| CorpusError::MalformedRow {
        line: 1,
        message: format!("missing column {:?}", schema.column("code")),
    })?;
    let version_col = col("version");
    let origin_col = col("origin_id");

    let mut cases = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line_no = idx + 2; // header is line 1
        let record = record.map_err(|e| CorpusError::MalformedRow {
            line: line_no,
            message: e.to_string(),
        })?;
        let get = |i: usize| record.get(i).unwrap_or("").to_string();
        let id = get(id_col);
        if id.is_empty() {
            return Err(CorpusError::MalformedRow {
                line: line_no,
                message: "empty id".to_string(),
            });
        }
        let version = match version_col.map(get).filter(|v| !v.is_empty()) {
            None => 0,
            Some(v) => v.parse::<u32>().map_err(|_| CorpusError::MalformedRow {
                line: line_no,
                message: format!("field \"version\" must be a non-negative integer, got {v:?}"),
            })?,
        };
        let origin_id = origin_col
            .map(get)
            .filter(|v| !v.is_empty())
            .unwrap_or_else(|| id.clone());
        cases.push(TestCase {
            id,
            origin_id,
            version,
            category: get(category_col),
            code: get(code_col),
        });
    }
    Ok(cases)
}

/// Category x set x version count table with derived totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsTable {
    pub labels: Vec<String>,
    pub sets: Vec<String>,
    pub versions: Vec<u32>,
    counts: BTreeMap<String, BTreeMap<String, BTreeMap<u32, u64>>>,
}

impl CountsTable {
    pub fn count(&self, category: &str, set: &str, version: u32) -> u64 {
        self.counts
            .get(category)
            .and_then(|s| s.get(set))
            .and_then(|v| v.get(&version))
            .copied()
            .unwrap_or(0)
    }

    /// Row total: all versions of one category within one set.
    pub fn set_total(&self, category: &str, set: &str) -> u64 {
        self.versions.iter().map(|&v| self.count(category, set, v)).sum()
    }

    /// All sets and versions of one category.
    pub fn category_total(&self, category: &str) -> u64 {
        self.sets.iter().map(|s| self.set_total(category, s)).sum()
    }

    /// Column total: one set and version across categories.
    pub fn version_total(&self, set: &str, version: u32) -> u64 {
        self.labels.iter().map(|c| self.count(c, set, version)).sum()
    }

    pub fn grand_total(&self) -> u64 {
        self.labels.iter().map(|c| self.category_total(c)).sum()
    }
}

/// Count cases by category, partition set, and version. Without a partition
/// there is a single set named `all`, one column per version.
pub fn category_counts(corpus: &Corpus, partition: Option<&SplitPlan>) -> Result<CountsTable, CorpusError> {
    let mut sets: Vec<(String, Vec<&TestCase>)> = Vec::new();
    match partition {
        None => {
            sets.push(("all".to_string(), corpus.cases().iter().collect()));
        }
        Some(plan) => {
            for (name, ids) in plan.sets() {
                let mut members = Vec::with_capacity(ids.len());
                for id in ids {
                    members.push(corpus.get(id).ok_or_else(|| CorpusError::UnknownId(id.clone()))?);
                }
                sets.push((name.clone(), members));
            }
        }
    }

    let mut versions: BTreeSet<u32> = BTreeSet::new();
    let mut counts: BTreeMap<String, BTreeMap<String, BTreeMap<u32, u64>>> = BTreeMap::new();
    for (set_name, members) in &sets {
        for case in members {
            versions.insert(case.version);
            *counts
                .entry(case.category.clone())
                .or_default()
                .entry(set_name.clone())
                .or_default()
                .entry(case.version)
                .or_insert(0) += 1;
        }
    }

    let mut labels = corpus.labels().to_vec();
    // Open corpora may be counted against plans that mention cases whose
    // category is not in the learned set; keep any extras at the end.
    for cat in counts.keys() {
        if !labels.contains(cat) {
            labels.push(cat.clone());
        }
    }

    Ok(CountsTable {
        labels,
        sets: sets.into_iter().map(|(n, _)| n).collect(),
        versions: versions.into_iter().collect(),
        counts,
    })
}
