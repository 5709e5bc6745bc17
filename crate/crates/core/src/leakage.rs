//! Variant-leakage detection across split boundaries.
//!
//! Works without provenance: identifiers, strings, and numbers are
//! normalized away, the remaining token stream is shingled into hashed
//! w-token windows, and cross-split pairs are compared by Jaccard
//! similarity. Rename/replace-only variants collapse to identical
//! fingerprints, so they are caught at similarity 1.0 no matter what the
//! generated words were. Same-origin pairs are always reported through the
//! provenance channel regardless of similarity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::lexer::{tokenize, TokenKind};
use crate::rng::fnv1a64;

#[derive(Debug, thiserror::Error)]
pub enum LeakageError {
    #[error("window size must be >= 1")]
    ZeroWindow,
    #[error("threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("fingerprints built with different window sizes ({0} vs {1})")]
    WindowMismatch(usize, usize),
    #[error("unknown id {0:?}")]
    UnknownId(String),
}

/// Shingle-set fingerprint of one case's normalized token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub case_id: String,
    pub window: usize,
    pub shingles: BTreeSet<u64>,
}

/// Build the fingerprint of `code` at window size `w`. Normalization folds
/// identifiers to `ID`, string literals to `STR`, numbers to `NUM`, keeps
/// other token texts, and drops whitespace and comments.
pub fn fingerprint_code(case_id: &str, code: &str, w: usize) -> Result<Fingerprint, LeakageError> {
    if w == 0 {
        return Err(LeakageError::ZeroWindow);
    }
    let tokenized = tokenize(code);
    let normalized: Vec<&str> = tokenized
        .tokens
        .iter()
        .filter_map(|t| match t.kind {
            TokenKind::Whitespace | TokenKind::Comment => None,
            TokenKind::Identifier => Some("ID"),
            TokenKind::StringLit => Some("STR"),
            TokenKind::Number => Some("NUM"),
            _ => Some(t.text.as_str()),
        })
        .collect();
    let mut shingles = BTreeSet::new();
    if normalized.len() >= w {
        let mut buf = Vec::new();
        for window in normalized.windows(w) {
            buf.clear();
            for (i, text) in window.iter().enumerate() {
                if i > 0 {
                    buf.push(0x1F); // unit separator between tokens
                }
                buf.extend_from_slice(text.as_bytes());
            }
            shingles.insert(fnv1a64(&buf));
        }
    }
    Ok(Fingerprint { case_id: case_id.to_string(), window: w, shingles })
}

/// Fingerprint a corpus case.
pub fn fingerprint(case: &crate::corpus::TestCase, w: usize) -> Result<Fingerprint, LeakageError> {
    fingerprint_code(&case.id, &case.code, w)
}

/// Jaccard similarity of two fingerprints built at the same window size.
/// Two empty sets compare as 1.0 only for the same case id.
pub fn similarity(a: &Fingerprint, b: &Fingerprint) -> Result<f64, LeakageError> {
    if a.window != b.window {
        return Err(LeakageError::WindowMismatch(a.window, b.window));
    }
    if a.shingles.is_empty() && b.shingles.is_empty() {
        return Ok(if a.case_id == b.case_id { 1.0 } else { 0.0 });
    }
    let intersection = a.shingles.intersection(&b.shingles).count();
    let union = a.shingles.len() + b.shingles.len() - intersection;
    Ok(intersection as f64 / union as f64)
}

/// One suspicious cross-split pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakFinding {
    pub a: String,
    pub b: String,
    pub similarity: f64,
    pub provenance_leak: bool,
}

/// Report of [`detect_leaks`], sorted by (similarity desc, id pair).
pub type LeakReport = Vec<LeakFinding>;

/// Scan all train x test pairs for similarity at or above `threshold`, plus
/// provenance-confirmed pairs (shared origin) at any similarity.
pub fn detect_leaks(
    train: &[String],
    test: &[String],
    corpus: &Corpus,
    threshold: f64,
    w: usize,
) -> Result<LeakReport, LeakageError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(LeakageError::BadThreshold(threshold));
    }
    let lookup = |ids: &[String]| -> Result<Vec<(&crate::corpus::TestCase, Fingerprint)>, LeakageError> {
        ids.iter()
            .map(|id| {
                let case = corpus.get(id).ok_or_else(|| LeakageError::UnknownId(id.clone()))?;
                Ok((case, fingerprint(case, w)?))
            })
            .collect()
    };
    let train_fps = lookup(train)?;
    let test_fps = lookup(test)?;

    let mut findings = Vec::new();
    for (a_case, a_fp) in &train_fps {
        for (b_case, b_fp) in &test_fps {
            let provenance_leak = a_case.origin_id == b_case.origin_id;
            if !provenance_leak {
                // Size pruning: Jaccard is bounded by min/max set size.
                let (small, large) = if a_fp.shingles.len() <= b_fp.shingles.len() {
                    (a_fp.shingles.len(), b_fp.shingles.len())
                } else {
                    (b_fp.shingles.len(), a_fp.shingles.len())
                };
                if large > 0 && (small as f64 / large as f64) < threshold {
                    continue;
                }
            }
            let sim = similarity(a_fp, b_fp)?;
            if provenance_leak || sim >= threshold {
                findings.push(LeakFinding {
                    a: a_case.id.clone(),
                    b: b_case.id.clone(),
                    similarity: sim,
                    provenance_leak,
                });
            }
        }
    }
    findings.sort_by(|x, y| {
        y.similarity
            .partial_cmp(&x.similarity)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b)))
    });
    Ok(findings)
}
