//! Confusion tables, one-vs-rest F1, bias gaps, and audit-report rendering.
//!
//! Percentages render rounded half-up to integer percent; raw reals are
//! retained in the JSON form. Averages are unweighted (macro) by default;
//! a support-weighted average is available behind a flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::augment::MutationConfig;
use crate::classifier::ClassifierConfig;
use crate::leakage::LeakFinding;
use crate::split::IntegrityViolation;

/// Report schema identifier embedded in every JSON report.
pub const REPORT_SCHEMA: &str = "augaudit/1";

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("gold and predicted id sets differ: {0}")]
    IdMismatch(String),
    #[error("case {id:?} carries label {category:?} outside the label order")]
    UnknownLabel { id: String, category: String },
    #[error("cannot average an empty label map")]
    EmptyLabelMap,
    #[error("label sets differ: {0}")]
    LabelMismatch(String),
    #[error("report is internally inconsistent: {0}")]
    InconsistentReport(String),
    #[error("unknown report format {0:?} (expected json, csv, or plotdata)")]
    UnknownFormat(String),
}

/// Square gold x predicted count matrix over a fixed label order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionTable {
    /// Zero matrix over `labels`.
    pub fn zero(labels: &[String]) -> Self {
        Self {
            labels: labels.to_vec(),
            counts: vec![vec![0; labels.len()]; labels.len()],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, gold: &str, predicted: &str) -> u64 {
        match (self.index(gold), self.index(predicted)) {
            (Some(g), Some(p)) => self.counts[g][p],
            _ => 0,
        }
    }

    pub fn add(&mut self, gold: &str, predicted: &str, count: u64) -> Result<(), MetricsError> {
        let g = self.index(gold).ok_or_else(|| MetricsError::UnknownLabel {
            id: String::new(),
            category: gold.to_string(),
        })?;
        let p = self.index(predicted).ok_or_else(|| MetricsError::UnknownLabel {
            id: String::new(),
            category: predicted.to_string(),
        })?;
        self.counts[g][p] += count;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Tally a confusion table from aligned (id, category) lists. The id sets
/// must match exactly.
pub fn confusion(
    gold: &[(String, String)],
    predicted: &[(String, String)],
    labels: &[String],
) -> Result<ConfusionTable, MetricsError> {
    let mut gold_by_id: BTreeMap<&str, &str> = BTreeMap::new();
    for (id, cat) in gold {
        if gold_by_id.insert(id, cat).is_some() {
            return Err(MetricsError::IdMismatch(format!("duplicate gold id {id:?}")));
        }
    }
    let mut pred_by_id: BTreeMap<&str, &str> = BTreeMap::new();
    for (id, cat) in predicted {
        if pred_by_id.insert(id, cat).is_some() {
            return Err(MetricsError::IdMismatch(format!("duplicate predicted id {id:?}")));
        }
    }
    if let Some(id) = gold_by_id.keys().find(|id| !pred_by_id.contains_key(*id)) {
        return Err(MetricsError::IdMismatch(format!("no prediction for {id:?}")));
    }
    if let Some(id) = pred_by_id.keys().find(|id| !gold_by_id.contains_key(*id)) {
        return Err(MetricsError::IdMismatch(format!("prediction for unknown id {id:?}")));
    }
    let mut table = ConfusionTable::zero(labels);
    for (&id, &gold_cat) in &gold_by_id {
        let pred_cat = pred_by_id[id];
        if table.index(gold_cat).is_none() {
            return Err(MetricsError::UnknownLabel { id: id.to_string(), category: gold_cat.to_string() });
        }
        if table.index(pred_cat).is_none() {
            return Err(MetricsError::UnknownLabel { id: id.to_string(), category: pred_cat.to_string() });
        }
        table.add(gold_cat, pred_cat, 1)?;
    }
    Ok(table)
}

/// One-vs-rest F1 per category. Any zero denominator makes the affected
/// quantity zero.
pub fn f1_per_category(table: &ConfusionTable) -> BTreeMap<String, f64> {
    let n = table.labels.len();
    let mut out = BTreeMap::new();
    for g in 0..n {
        let tp = table.counts[g][g];
        let fn_: u64 = (0..n).filter(|&p| p != g).map(|p| table.counts[g][p]).sum();
        let fp: u64 = (0..n).filter(|&o| o != g).map(|o| table.counts[o][g]).sum();
        let precision = ratio_or_zero(tp, tp + fp);
        let recall = ratio_or_zero(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        out.insert(table.labels[g].clone(), f1);
    }
    out
}

fn ratio_or_zero(num: u64, den: u64) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

/// Mean over the map's values in its own (sorted-key) iteration order. Using
/// one summation order everywhere keeps stored and recomputed averages
/// bit-identical.
fn mean(values: &BTreeMap<String, f64>) -> f64 {
    values.values().sum::<f64>() / values.len() as f64
}

/// Unweighted mean of per-category F1.
pub fn macro_f1(per_category: &BTreeMap<String, f64>) -> Result<f64, MetricsError> {
    if per_category.is_empty() {
        return Err(MetricsError::EmptyLabelMap);
    }
    Ok(mean(per_category))
}

/// Support-weighted mean, weighting each category by its gold count.
pub fn weighted_f1(per_category: &BTreeMap<String, f64>, table: &ConfusionTable) -> Result<f64, MetricsError> {
    if per_category.is_empty() {
        return Err(MetricsError::EmptyLabelMap);
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (label, f1) in per_category {
        let support: u64 = table
            .labels
            .iter()
            .map(|p| table.get(label, p))
            .sum();
        weighted += f1 * support as f64;
        total += support as f64;
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(weighted / total)
}

/// Per-category F1 differences (set2 - set1) plus their mean. Positive means
/// better on set2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapValues {
    pub per_category: BTreeMap<String, f64>,
    pub average: f64,
}

/// Compare two per-category F1 maps over the same labels.
pub fn bias_gap(
    set1: &BTreeMap<String, f64>,
    set2: &BTreeMap<String, f64>,
) -> Result<GapValues, MetricsError> {
    if set1.len() != set2.len() || set1.keys().zip(set2.keys()).any(|(a, b)| a != b) {
        return Err(MetricsError::LabelMismatch(format!(
            "{:?} vs {:?}",
            set1.keys().collect::<Vec<_>>(),
            set2.keys().collect::<Vec<_>>()
        )));
    }
    let per_category: BTreeMap<String, f64> = set1
        .iter()
        .map(|(label, &f1_1)| (label.clone(), set2[label] - f1_1))
        .collect();
    let average = if per_category.is_empty() { 0.0 } else { mean(&per_category) };
    Ok(GapValues { per_category, average })
}

/// Scores of one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSetScores {
    pub name: String,
    pub per_category_f1: BTreeMap<String, f64>,
    pub macro_f1: f64,
}

impl EvalSetScores {
    pub fn new(name: impl Into<String>, per_category_f1: BTreeMap<String, f64>) -> Result<Self, MetricsError> {
        let macro_f1 = macro_f1(&per_category_f1)?;
        Ok(Self { name: name.into(), per_category_f1, macro_f1 })
    }
}

/// One set1-vs-set2 comparison in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub name: String,
    pub set1: String,
    pub set2: String,
    #[serde(flatten)]
    pub values: GapValues,
}

/// Seeds, knobs, and the config digest echoed into every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub test_fraction: f64,
    pub mutation: MutationConfig,
    pub leakage_window: usize,
    pub leakage_threshold: f64,
    pub classifier: ClassifierConfig,
    pub config_hash: String,
}

/// The full audit output: scores per evaluation set, gap tables, integrity
/// and leakage findings, and the configuration echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAuditReport {
    pub schema: String,
    pub labels: Vec<String>,
    pub eval_sets: Vec<EvalSetScores>,
    pub gaps: Vec<GapTable>,
    pub integrity: BTreeMap<String, Vec<IntegrityViolation>>,
    pub leakage: BTreeMap<String, Vec<LeakFinding>>,
    pub config: ConfigEcho,
}

impl BiasAuditReport {
    pub fn new(labels: Vec<String>) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            labels,
            eval_sets: Vec::new(),
            gaps: Vec::new(),
            integrity: BTreeMap::new(),
            leakage: BTreeMap::new(),
            config: ConfigEcho::default(),
        }
    }

    fn eval_set(&self, name: &str) -> Option<&EvalSetScores> {
        self.eval_sets.iter().find(|s| s.name == name)
    }

    /// Recompute every stored average from its own rows; exact equality is
    /// required because the same summation order is used throughout.
    pub fn check_consistency(&self) -> Result<(), MetricsError> {
        for set in &self.eval_sets {
            if set.per_category_f1.is_empty() {
                continue;
            }
            if mean(&set.per_category_f1) != set.macro_f1 {
                return Err(MetricsError::InconsistentReport(format!(
                    "macro F1 of {:?} does not equal the mean of its rows",
                    set.name
                )));
            }
        }
        for gap in &self.gaps {
            if gap.values.per_category.is_empty() {
                continue;
            }
            if mean(&gap.values.per_category) != gap.values.average {
                return Err(MetricsError::InconsistentReport(format!(
                    "average gap of {:?} does not equal the mean of its rows",
                    gap.name
                )));
            }
        }
        Ok(())
    }
}

/// Output encodings of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Plotdata,
}

impl std::str::FromStr for ReportFormat {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata" => Ok(ReportFormat::Plotdata),
            other => Err(MetricsError::UnknownFormat(other.to_string())),
        }
    }
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Plotdata => "plotdata.csv",
        }
    }
}

/// Integer percent, rounded half-up (toward positive infinity on .5).
pub fn percent(f1: f64) -> i64 {
    (f1 * 100.0 + 0.5).floor() as i64
}

fn signed(p: i64) -> String {
    if p >= 0 { format!("+{p}") } else { p.to_string() }
}

/// Render a report. Byte-deterministic for equal inputs.
pub fn render_report(report: &BiasAuditReport, format: ReportFormat) -> Result<Vec<u8>, MetricsError> {
    report.check_consistency()?;
    let mut out = Vec::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_vec_pretty(report).expect("report serialization cannot fail");
            out.push(b'\n');
        }
        ReportFormat::Csv => render_csv(report, &mut out),
        ReportFormat::Plotdata => render_plotdata(report, &mut out),
    }
    Ok(out)
}

fn render_csv(report: &BiasAuditReport, out: &mut Vec<u8>) {
    use std::io::Write;
    if report.gaps.is_empty() {
        // No comparisons: one block listing per-set scores.
        let names: Vec<&str> = report.eval_sets.iter().map(|s| s.name.as_str()).collect();
        let _ = writeln!(out, "Category,{}", names.join(","));
        for label in &report.labels {
            let cells: Vec<String> = report
                .eval_sets
                .iter()
                .map(|s| percent(*s.per_category_f1.get(label).unwrap_or(&0.0)).to_string())
                .collect();
            let _ = writeln!(out, "{label},{}", cells.join(","));
        }
        if !report.labels.is_empty() && !report.eval_sets.is_empty() {
            let cells: Vec<String> =
                report.eval_sets.iter().map(|s| percent(s.macro_f1).to_string()).collect();
            let _ = writeln!(out, "Average,{}", cells.join(","));
        }
        return;
    }
    for (i, gap) in report.gaps.iter().enumerate() {
        if i > 0 {
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "Category,{},{},Difference", gap.set1, gap.set2);
        let s1 = report.eval_set(&gap.set1);
        let s2 = report.eval_set(&gap.set2);
        for label in &report.labels {
            let f1_1 = s1.and_then(|s| s.per_category_f1.get(label)).copied().unwrap_or(0.0);
            let f1_2 = s2.and_then(|s| s.per_category_f1.get(label)).copied().unwrap_or(0.0);
            let diff = gap.values.per_category.get(label).copied().unwrap_or(f1_2 - f1_1);
            let _ = writeln!(
                out,
                "{label},{},{},{}",
                percent(f1_1),
                percent(f1_2),
                signed(percent(diff))
            );
        }
        if !report.labels.is_empty() {
            let m1 = s1.map(|s| s.macro_f1).unwrap_or(0.0);
            let m2 = s2.map(|s| s.macro_f1).unwrap_or(0.0);
            let _ = writeln!(
                out,
                "Average,{},{},{}",
                percent(m1),
                percent(m2),
                signed(percent(gap.values.average))
            );
        }
    }
}

fn render_plotdata(report: &BiasAuditReport, out: &mut Vec<u8>) {
    use std::io::Write;
    for (i, gap) in report.gaps.iter().enumerate() {
        if i > 0 {
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "# figure: {} ({} vs {})", gap.name, gap.set1, gap.set2);
        let _ = writeln!(out, "category,series1_f1,series2_f1");
        let s1 = report.eval_set(&gap.set1);
        let s2 = report.eval_set(&gap.set2);
        for label in &report.labels {
            let f1_1 = s1.and_then(|s| s.per_category_f1.get(label)).copied().unwrap_or(0.0);
            let f1_2 = s2.and_then(|s| s.per_category_f1.get(label)).copied().unwrap_or(0.0);
            let _ = writeln!(out, "{label},{f1_1},{f1_2}");
        }
    }
}
