//! Mutation-based augmentation of test-code cases.
//!
//! Four lexical operators: rename eligible local variables, rename the test
//! method, replace string literals, and insert unused variable declarations.
//! Labels and flakiness-relevant tokens (keywords, annotations, identifiers
//! in call position, a configurable protected list) are preserved. All
//! randomness comes from a per-(case, variant) SplitMix64 stream, so the
//! result is a pure function of (corpus, config, seed).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TestCase};
use crate::lexer::{is_keyword, tokenize, Token, TokenKind};
use crate::rng::{case_stream_seed, SplitMix64};

/// Identifiers never touched by default: common concurrency/timing tokens
/// whose presence is what the labels are about.
pub const DEFAULT_PROTECTED: &[&str] =
    &["Thread", "sleep", "wait", "notify", "Timeout", "await", "join"];

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("case {id:?} does not tokenize cleanly")]
    Untokenizable { id: String },
    #[error("fresh word exhaustion after 1000 attempts; length range or forbidden set is too tight")]
    WordExhaustion,
    #[error("plan was built for case {plan_case:?}, not {got_case:?}")]
    PlanMismatch { plan_case: String, got_case: String },
    #[error("stale plan for case {case_id:?}: {detail}")]
    StaleSpan { case_id: String, detail: String },
    #[error("invalid mutation config: {0}")]
    InvalidConfig(String),
}

/// Operator switches and knobs. Serializable as the `augment` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationConfig {
    pub enable_rename_locals: bool,
    pub enable_rename_test_method: bool,
    pub enable_replace_strings: bool,
    pub enable_insert_unused: bool,
    /// Inclusive range for the number of inserted declarations per variant.
    pub insert_count_range: (u32, u32),
    pub protected_identifiers: BTreeSet<String>,
    /// Inclusive length range for generated words.
    pub random_word_length_range: (u32, u32),
    pub variants_per_original: u32,
    /// Extend literal replacement to numeric literals. Recorded as
    /// `ReplaceString` edits carrying the numeral text.
    pub replace_numbers: bool,
    /// Fallback prefix for finding the test method when no `@Test`
    /// annotation is present.
    pub test_method_prefix: String,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self {
            enable_rename_locals: true,
            enable_rename_test_method: true,
            enable_replace_strings: true,
            enable_insert_unused: true,
            insert_count_range: (1, 2),
            protected_identifiers: DEFAULT_PROTECTED.iter().map(|s| s.to_string()).collect(),
            random_word_length_range: (5, 10),
            variants_per_original: 2,
            replace_numbers: false,
            test_method_prefix: "test".to_string(),
        }
    }
}

impl MutationConfig {
    /// All operators off; useful as a base for targeted configs.
    pub fn disabled() -> Self {
        Self {
            enable_rename_locals: false,
            enable_rename_test_method: false,
            enable_replace_strings: false,
            enable_insert_unused: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let (ilo, ihi) = self.insert_count_range;
        if ilo > ihi {
            return Err(AugmentError::InvalidConfig(format!(
                "insert_count_range ({ilo}, {ihi}) is empty"
            )));
        }
        let (wlo, whi) = self.random_word_length_range;
        if wlo == 0 || wlo > whi {
            return Err(AugmentError::InvalidConfig(format!(
                "random_word_length_range ({wlo}, {whi}) is empty"
            )));
        }
        Ok(())
    }
}

/// One concrete edit. Spans are byte offsets into the origin's code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    Rename {
        old: String,
        new: String,
        spans: Vec<(usize, usize)>,
    },
    ReplaceString {
        span: (usize, usize),
        text: String,
    },
    InsertDecl {
        at: usize,
        text: String,
    },
}

/// Ordered edits for one (case, variant) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationPlan {
    pub case_id: String,
    pub variant_index: u32,
    pub edits: Vec<Edit>,
}

impl MutationPlan {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

/// Generate a lowercase alphabetic word with length in `length_range`, not
/// in `forbidden` and not a keyword. Errors after 1000 attempts.
pub fn fresh_word(
    rng: &mut SplitMix64,
    length_range: (u32, u32),
    forbidden: &BTreeSet<String>,
) -> Result<String, AugmentError> {
    let (lo, hi) = length_range;
    for _ in 0..1000 {
        let len = rng.next_in_range(u64::from(lo), u64::from(hi)) as usize;
        let word: String = (0..len)
            .map(|_| char::from(b'a' + rng.next_below(26) as u8))
            .collect();
        if !forbidden.contains(&word) && !is_keyword(&word) {
            return Ok(word);
        }
    }
    Err(AugmentError::WordExhaustion)
}

/// Primitive-ish keywords that open a local declaration.
const DECL_TYPE_KEYWORDS: &[&str] =
    &["boolean", "byte", "char", "double", "float", "int", "long", "short", "var"];

fn is_type_like_ident(text: &str) -> bool {
    text.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

/// Token-level structural facts about one case.
struct Analysis<'a> {
    tokens: &'a [Token],
    /// Indices of significant (non-whitespace, non-comment) tokens.
    sig: Vec<usize>,
    /// Texts of identifiers occurring in call position anywhere.
    call_idents: BTreeSet<&'a str>,
    /// Texts used as a method declaration name.
    decl_names: BTreeSet<&'a str>,
    /// Token-index ranges (open brace, close brace) of method bodies.
    body_spans: Vec<(usize, usize)>,
    /// The test method, if one was identified.
    test_method: Option<TestMethod<'a>>,
}

struct TestMethod<'a> {
    name: &'a str,
    /// Token-index range of the body braces.
    body: (usize, usize),
}

impl<'a> Analysis<'a> {
    fn run(tokens: &'a [Token], test_method_prefix: &str) -> Self {
        let sig: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| !matches!(t.kind, TokenKind::Whitespace | TokenKind::Comment))
            .map(|(i, _)| i)
            .collect();

        let mut call_idents = BTreeSet::new();
        let mut decl_names = BTreeSet::new();
        let mut body_spans = Vec::new();
        // (name text, name sig position, body token range)
        let mut methods: Vec<(&str, usize, (usize, usize))> = Vec::new();

        for si in 0..sig.len() {
            let tok = &tokens[sig[si]];
            if tok.kind != TokenKind::Identifier {
                continue;
            }
            let Some(&next) = sig.get(si + 1) else { continue };
            if tokens[next].text != "(" {
                continue;
            }
            // Identifier followed by '(' is a call unless the argument list
            // is followed by a method body.
            match Self::method_body_after_params(tokens, &sig, si + 1) {
                Some(body) => {
                    decl_names.insert(tok.text.as_str());
                    body_spans.push(body);
                    methods.push((tok.text.as_str(), si, body));
                }
                None => {
                    call_idents.insert(tok.text.as_str());
                }
            }
        }

        let test_method = Self::find_test_method(tokens, &sig, &methods, test_method_prefix);

        Self { tokens, sig, call_idents, decl_names, body_spans, test_method }
    }

    /// From the sig index of an opening paren, find the matching close and
    /// check whether a `{` follows (allowing `throws A, B` style tails).
    /// Returns the body's token-index brace range.
    fn method_body_after_params(
        tokens: &[Token],
        sig: &[usize],
        open_paren_si: usize,
    ) -> Option<(usize, usize)> {
        let mut depth = 0usize;
        let mut si = open_paren_si;
        let close_si = loop {
            let tok = &tokens[sig[si]];
            match tok.text.as_str() {
                "(" => depth += 1,
                ")" => {
                    depth -= 1;
                    if depth == 0 {
                        break si;
                    }
                }
                _ => {}
            }
            si += 1;
            if si >= sig.len() {
                return None;
            }
        };
        // Walk the decl tail: keywords (throws), identifiers, commas.
        let mut si = close_si + 1;
        while si < sig.len() {
            let tok = &tokens[sig[si]];
            match tok.kind {
                TokenKind::Keyword | TokenKind::Identifier => si += 1,
                TokenKind::Punct if tok.text == "," => si += 1,
                TokenKind::Punct if tok.text == "{" => {
                    let close = Self::matching_brace(tokens, sig, si)?;
                    return Some((sig[si], close));
                }
                _ => return None,
            }
        }
        None
    }

    /// Token index of the `}` matching the `{` at sig position `open_si`.
    fn matching_brace(tokens: &[Token], sig: &[usize], open_si: usize) -> Option<usize> {
        let mut depth = 0usize;
        for &ti in &sig[open_si..] {
            match tokens[ti].text.as_str() {
                "{" => depth += 1,
                "}" => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(ti);
                    }
                }
                _ => {}
            }
        }
        None
    }

    fn find_test_method(
        tokens: &'a [Token],
        sig: &[usize],
        methods: &[(&'a str, usize, (usize, usize))],
        prefix: &str,
    ) -> Option<TestMethod<'a>> {
        // Preferred: a method with @Test in its modifier/annotation run,
        // scanning backwards to the previous statement boundary.
        for &(name, name_si, body) in methods {
            let mut si = name_si;
            while si > 0 {
                si -= 1;
                let tok = &tokens[sig[si]];
                match tok.kind {
                    TokenKind::Annotation if tok.text == "@Test" => {
                        return Some(TestMethod { name, body });
                    }
                    TokenKind::Punct if matches!(tok.text.as_str(), ";" | "{" | "}") => break,
                    _ => {}
                }
            }
        }
        // Fallback: first method whose name starts with the prefix.
        methods
            .iter()
            .find(|(name, _, _)| name.starts_with(prefix))
            .map(|&(name, _, body)| TestMethod { name, body })
    }

    fn inside_a_body(&self, token_idx: usize) -> bool {
        self.body_spans.iter().any(|&(open, close)| token_idx > open && token_idx < close)
    }

    /// Identifier texts first seen in a declaration position inside a method
    /// body, in first-occurrence order.
    fn declared_locals(&self) -> Vec<&'a str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (pos, &ti) in self.sig.iter().enumerate() {
            let tok = &self.tokens[ti];
            if tok.kind != TokenKind::Identifier || !self.inside_a_body(ti) {
                continue;
            }
            let prev_is_type = pos > 0
                && {
                    let p = &self.tokens[self.sig[pos - 1]];
                    match p.kind {
                        TokenKind::Keyword => DECL_TYPE_KEYWORDS.contains(&p.text.as_str()),
                        TokenKind::Identifier => is_type_like_ident(&p.text),
                        TokenKind::Punct => p.text == ">" || p.text == "]",
                        _ => false,
                    }
                };
            let next_opens_decl = self
                .sig
                .get(pos + 1)
                .map(|&ni| matches!(self.tokens[ni].text.as_str(), "=" | ";" | ":" | ","))
                .unwrap_or(false);
            if prev_is_type && next_opens_decl && seen.insert(tok.text.as_str()) {
                out.push(tok.text.as_str());
            }
        }
        out
    }

    /// Byte spans of every identifier token with the given text.
    fn ident_spans(&self, text: &str) -> Vec<(usize, usize)> {
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Identifier && t.text == text)
            .map(Token::span)
            .collect()
    }

    /// Byte offsets of statement boundaries inside the test method body:
    /// just after `{`, `;`, and inner `}` tokens. Semicolons inside
    /// parentheses (for-loop headers) are not boundaries.
    fn insertion_points(&self) -> Vec<usize> {
        let Some(tm) = &self.test_method else { return Vec::new() };
        let (open, close) = tm.body;
        let mut points = Vec::new();
        let mut paren_depth = 0usize;
        for tok in &self.tokens[open..close] {
            if tok.kind != TokenKind::Punct {
                continue;
            }
            match tok.text.as_str() {
                "(" => paren_depth += 1,
                ")" => paren_depth = paren_depth.saturating_sub(1),
                "{" | "}" => points.push(tok.end),
                ";" if paren_depth == 0 => points.push(tok.end),
                _ => {}
            }
        }
        points
    }
}

/// Plan all enabled operators for one variant of `case`, deterministically
/// from `(global_seed, case.id, variant_index)`.
pub fn plan_mutations(
    case: &TestCase,
    config: &MutationConfig,
    variant_index: u32,
    global_seed: u64,
) -> Result<MutationPlan, AugmentError> {
    config.validate()?;
    let tokenized = tokenize(&case.code);
    if !tokenized.clean {
        return Err(AugmentError::Untokenizable { id: case.id.clone() });
    }
    let analysis = Analysis::run(&tokenized.tokens, &config.test_method_prefix);
    let mut rng = SplitMix64::new(case_stream_seed(global_seed, &case.id, variant_index));

    // Fresh words must not collide with anything already in the token
    // stream, nor with each other.
    let mut forbidden: BTreeSet<String> = tokenized
        .tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Identifier)
        .map(|t| t.text.clone())
        .collect();
    forbidden.extend(config.protected_identifiers.iter().cloned());

    let mut edits = Vec::new();

    // Draw order is fixed: locals, test method, strings, numbers, insertion
    // count, insertion points, then per-insertion word and digit.
    if config.enable_rename_locals {
        for old in analysis.declared_locals() {
            if is_type_like_ident(old)
                || config.protected_identifiers.contains(old)
                || analysis.call_idents.contains(old)
                || analysis.decl_names.contains(old)
            {
                continue;
            }
            let new = fresh_word(&mut rng, config.random_word_length_range, &forbidden)?;
            forbidden.insert(new.clone());
            edits.push(Edit::Rename {
                old: old.to_string(),
                new,
                spans: analysis.ident_spans(old),
            });
        }
    }

    if config.enable_rename_test_method {
        if let Some(tm) = &analysis.test_method {
            let name = tm.name;
            // A name that also occurs in call position (or is protected)
            // stays put; renaming it would disturb protected tokens.
            if !analysis.call_idents.contains(name)
                && !config.protected_identifiers.contains(name)
                && !is_type_like_ident(name)
            {
                let new = fresh_word(&mut rng, config.random_word_length_range, &forbidden)?;
                forbidden.insert(new.clone());
                edits.push(Edit::Rename {
                    old: name.to_string(),
                    new,
                    spans: analysis.ident_spans(name),
                });
            }
        }
    }

    if config.enable_replace_strings {
        for tok in tokenized.tokens.iter().filter(|t| t.kind == TokenKind::StringLit) {
            let word = fresh_word(&mut rng, config.random_word_length_range, &forbidden)?;
            forbidden.insert(word.clone());
            edits.push(Edit::ReplaceString { span: tok.span(), text: format!("\"{word}\"") });
        }
    }

    if config.replace_numbers {
        for tok in tokenized.tokens.iter().filter(|t| t.kind == TokenKind::Number) {
            let value = rng.next_below(1000);
            edits.push(Edit::ReplaceString { span: tok.span(), text: value.to_string() });
        }
    }

    if config.enable_insert_unused {
        let points = analysis.insertion_points();
        if !points.is_empty() {
            let (lo, hi) = config.insert_count_range;
            let n = rng.next_in_range(u64::from(lo), u64::from(hi)) as usize;
            let n = n.min(points.len());
            let mut order: Vec<usize> = (0..points.len()).collect();
            rng.shuffle(&mut order);
            let mut chosen: Vec<usize> = order[..n].iter().map(|&i| points[i]).collect();
            chosen.sort_unstable();
            for at in chosen {
                let word = fresh_word(&mut rng, config.random_word_length_range, &forbidden)?;
                forbidden.insert(word.clone());
                let digit = rng.next_below(10);
                edits.push(Edit::InsertDecl { at, text: format!(" int {word} = {digit};") });
            }
        }
    }

    Ok(MutationPlan { case_id: case.id.clone(), variant_index, edits })
}

/// Apply a plan, producing the variant case `{origin}_v{index}`.
pub fn apply_mutations(case: &TestCase, plan: &MutationPlan) -> Result<TestCase, AugmentError> {
    if plan.case_id != case.id {
        return Err(AugmentError::PlanMismatch {
            plan_case: plan.case_id.clone(),
            got_case: case.id.clone(),
        });
    }
    let code = &case.code;
    let stale = |detail: String| AugmentError::StaleSpan { case_id: case.id.clone(), detail };

    // Flatten edits into patches and verify them against the current code.
    let mut patches: Vec<(usize, usize, &str)> = Vec::new();
    for edit in &plan.edits {
        match edit {
            Edit::Rename { old, new, spans } => {
                for &(start, end) in spans {
                    if end > code.len() || !code.is_char_boundary(start) || !code.is_char_boundary(end) {
                        return Err(stale(format!("rename span {start}..{end} out of bounds")));
                    }
                    if &code[start..end] != old {
                        return Err(stale(format!(
                            "rename span {start}..{end} holds {:?}, expected {old:?}",
                            &code[start..end]
                        )));
                    }
                    patches.push((start, end, new));
                }
            }
            Edit::ReplaceString { span: (start, end), text } => {
                if *end > code.len()
                    || start >= end
                    || !code.is_char_boundary(*start)
                    || !code.is_char_boundary(*end)
                {
                    return Err(stale(format!("replacement span {start}..{end} out of bounds")));
                }
                patches.push((*start, *end, text));
            }
            Edit::InsertDecl { at, text } => {
                if *at > code.len() || !code.is_char_boundary(*at) {
                    return Err(stale(format!("insertion point {at} out of bounds")));
                }
                patches.push((*at, *at, text));
            }
        }
    }
    // Reject overlapping (not merely touching) patches.
    let mut sorted = patches.clone();
    sorted.sort_by_key(|&(start, end, _)| (start, end));
    for pair in sorted.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(stale(format!(
                "overlapping edits at {}..{} and {}..{}",
                pair[0].0, pair[0].1, pair[1].0, pair[1].1
            )));
        }
    }

    // Apply right-to-left; at equal start, the wider patch first so a
    // zero-width insertion ends up before the replaced span.
    patches.sort_by_key(|&(start, end, _)| std::cmp::Reverse((start, end)));
    let mut out = code.clone();
    for (start, end, text) in patches {
        out.replace_range(start..end, text);
    }

    Ok(TestCase {
        id: format!("{}_v{}", case.id, plan.variant_index),
        origin_id: case.id.clone(),
        version: plan.variant_index,
        category: case.category.clone(),
        code: out,
    })
}

/// Why one origin was skipped during corpus augmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub id: String,
    pub reason: String,
}

/// Augment every version-0 case with `variants_per_original` new variants.
/// Failed cases are skipped and recorded, never fatal. Variant indices
/// continue after any variants already present.
pub fn augment_corpus(
    corpus: &Corpus,
    config: &MutationConfig,
    global_seed: u64,
) -> Result<(Corpus, Vec<SkipRecord>), AugmentError> {
    config.validate()?;
    let k = config.variants_per_original;
    if k == 0 {
        return Ok((corpus.clone(), Vec::new()));
    }
    let mut new_cases: Vec<TestCase> = corpus.cases().to_vec();
    let mut skips = Vec::new();
    'origins: for case in corpus.originals() {
        let start = corpus
            .variants_of(&case.id)
            .iter()
            .filter_map(|vid| corpus.get(vid))
            .map(|v| v.version)
            .max()
            .unwrap_or(0)
            + 1;
        let mut pending = Vec::with_capacity(k as usize);
        for variant_index in start..start + k {
            let variant_id = format!("{}_v{variant_index}", case.id);
            if corpus.contains(&variant_id) {
                skips.push(SkipRecord {
                    id: case.id.clone(),
                    reason: format!("variant id {variant_id:?} already taken"),
                });
                continue 'origins;
            }
            match plan_mutations(case, config, variant_index, global_seed)
                .and_then(|plan| apply_mutations(case, &plan))
            {
                Ok(variant) => pending.push(variant),
                Err(err) => {
                    skips.push(SkipRecord { id: case.id.clone(), reason: err.to_string() });
                    continue 'origins;
                }
            }
        }
        new_cases.extend(pending);
    }
    let augmented = Corpus::from_cases(new_cases, corpus.label_policy().clone())
        .expect("augmentation preserves corpus invariants");
    Ok((augmented, skips))
}
