//! Seeded generator of synthetic Java-like test corpora.
//!
//! Used to calibrate the leak detector, exercise the augmentor on varied
//! structure, and replicate bias directions end to end without shipping any
//! real dataset. Each generated case carries three vocabulary layers:
//!
//! * category signal: call-position words shared by every case of a label,
//! * per-origin signature: call-position words unique to one origin (these
//!   survive augmentation, which is exactly what makes variants of training
//!   cases easy for a vocabulary-sensitive classifier),
//! * boilerplate: assertion/helper words shared by everyone, plus occasional
//!   off-category contamination so classification stays imperfect.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelPolicy, TestCase, FLAKY_LABELS};
use crate::rng::{case_stream_seed, fnv1a64, SplitMix64};

/// Knobs for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub categories: Vec<String>,
    pub origins_per_category: u32,
    /// Size of each category's shared signal vocabulary.
    pub signal_words_per_category: u32,
    /// Signal calls woven into each case.
    pub signal_calls_range: (u32, u32),
    /// Per-origin signature words (each called once).
    pub signature_words_range: (u32, u32),
    /// Extra body statements beyond the signature/signal calls.
    pub statements_range: (u32, u32),
    /// Probability of one off-category signal call per case.
    pub contamination: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            categories: FLAKY_LABELS.iter().map(|s| s.to_string()).collect(),
            origins_per_category: 8,
            signal_words_per_category: 6,
            signal_calls_range: (2, 4),
            signature_words_range: (2, 3),
            statements_range: (5, 12),
            contamination: 0.25,
        }
    }
}

fn word(rng: &mut SplitMix64, len_range: (u64, u64)) -> String {
    let len = rng.next_in_range(len_range.0, len_range.1) as usize;
    (0..len).map(|_| char::from(b'a' + rng.next_below(26) as u8)).collect()
}

fn chance(rng: &mut SplitMix64, p: f64) -> bool {
    ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) < p
}

/// Build a version-0 corpus of `origins_per_category x categories` cases,
/// purely determined by `seed`.
pub fn generate(config: &SynthConfig, seed: u64) -> Corpus {
    let mut vocab_rng = SplitMix64::new(seed ^ fnv1a64(b"synth-vocab"));
    let signal_vocab: Vec<Vec<String>> = config
        .categories
        .iter()
        .map(|_| {
            (0..config.signal_words_per_category)
                .map(|_| word(&mut vocab_rng, (6, 9)))
                .collect()
        })
        .collect();

    let mut cases = Vec::new();
    for (cat_idx, category) in config.categories.iter().enumerate() {
        for i in 0..config.origins_per_category {
            let id = format!("{}_{i:03}", category.to_ascii_lowercase());
            let mut rng = SplitMix64::new(case_stream_seed(seed, &id, 0));
            let code = generate_case(&mut rng, config, &signal_vocab, cat_idx, i);
            cases.push(TestCase::original(id, category.clone(), code));
        }
    }
    Corpus::from_cases(cases, LabelPolicy::Closed(config.categories.clone()))
        .expect("generated corpus is valid by construction")
}

fn generate_case(
    rng: &mut SplitMix64,
    config: &SynthConfig,
    signal_vocab: &[Vec<String>],
    cat_idx: usize,
    case_no: u32,
) -> String {
    let own_vocab = &signal_vocab[cat_idx];
    let pick = |rng: &mut SplitMix64, v: &[String]| v[rng.next_below(v.len() as u64) as usize].clone();

    let mut locals: Vec<String> = Vec::new();
    let n_locals = rng.next_in_range(1, 3);
    let mut statements: Vec<String> = Vec::new();
    for _ in 0..n_locals {
        let name = word(rng, (4, 7));
        let decl = match rng.next_below(3) {
            0 => format!("int {name} = {};", rng.next_below(100)),
            1 => {
                let s1 = word(rng, (3, 6));
                let s2 = word(rng, (3, 6));
                format!("String {name} = \"{s1} {s2}\";")
            }
            _ => format!("long {name} = {}L;", rng.next_below(5000)),
        };
        statements.push(decl);
        locals.push(name);
    }
    let any_local = |rng: &mut SplitMix64, locals: &[String]| -> String {
        if locals.is_empty() {
            rng.next_below(10).to_string()
        } else {
            locals[rng.next_below(locals.len() as u64) as usize].clone()
        }
    };

    // Per-origin signature calls.
    let n_sig = rng.next_in_range(
        u64::from(config.signature_words_range.0),
        u64::from(config.signature_words_range.1),
    );
    for _ in 0..n_sig {
        let sig = word(rng, (7, 10));
        statements.push(match rng.next_below(3) {
            0 => format!("{sig}();"),
            1 => format!("{sig}({});", any_local(rng, &locals)),
            _ => format!("{sig}({}, {});", rng.next_below(100), any_local(rng, &locals)),
        });
    }
    // Category signal calls.
    let n_signal = rng.next_in_range(
        u64::from(config.signal_calls_range.0),
        u64::from(config.signal_calls_range.1),
    );
    for _ in 0..n_signal {
        let w = pick(rng, own_vocab);
        statements.push(format!("{w}({});", rng.next_below(50)));
    }
    if signal_vocab.len() > 1 && chance(rng, config.contamination) {
        let other = (cat_idx + 1 + rng.next_below(signal_vocab.len() as u64 - 1) as usize)
            % signal_vocab.len();
        let w = pick(rng, &signal_vocab[other]);
        statements.push(format!("{w}({});", rng.next_below(50)));
    }
    // Structural filler, drawn from varied statement shapes.
    let n_stmts = rng.next_in_range(
        u64::from(config.statements_range.0),
        u64::from(config.statements_range.1),
    );
    for _ in 0..n_stmts {
        let stmt = match rng.next_below(10) {
            0 => {
                let name = word(rng, (4, 7));
                let s = format!("long {name} = {};", rng.next_below(1000));
                locals.push(name);
                s
            }
            1 => format!("assertEquals({}, {});", rng.next_below(10), any_local(rng, &locals)),
            2 => format!("assertNotNull({});", any_local(rng, &locals)),
            3 => format!("Thread.sleep({});", 10 * (1 + rng.next_below(20))),
            4 => {
                let v = any_local(rng, &locals);
                let w = pick(rng, own_vocab);
                format!("if ({v} != null) {{ {w}({v}); }}")
            }
            5 => {
                let idx = word(rng, (1, 2));
                let w = pick(rng, own_vocab);
                format!(
                    "for (int {idx} = 0; {idx} < {}; {idx}++) {{ {w}({idx}); }}",
                    1 + rng.next_below(9)
                )
            }
            6 => {
                let s = word(rng, (4, 8));
                let w = pick(rng, own_vocab);
                format!("try {{ {w}(); }} catch (Exception e) {{ fail(\"{s}\"); }}")
            }
            7 => {
                let v = any_local(rng, &locals);
                let w = word(rng, (4, 8));
                format!("while ({v} < {}) {{ {w}.step(); break; }}", rng.next_below(20))
            }
            8 => {
                let obj = word(rng, (4, 7));
                format!("{obj}.record({});", any_local(rng, &locals))
            }
            _ => {
                let v = any_local(rng, &locals);
                format!("assertTrue({v} != {});", rng.next_below(1000))
            }
        };
        statements.push(stmt);
    }

    // Interleave everything; generated snippets are never compiled, so
    // use-before-declaration is harmless, and varied statement order is what
    // keeps unrelated cases structurally distinct.
    rng.shuffle(&mut statements);

    let mut body = String::new();
    for stmt in &statements {
        let _ = writeln!(body, "        {stmt}");
    }
    let mut method = word(rng, (5, 8));
    if let Some(first) = method.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    let throws = if rng.next_below(2) == 0 { " throws Exception" } else { "" };
    format!("@Test\n    public void test{method}{case_no}(){throws} {{\n{body}    }}\n")
}
