//! Lossless lexer for Java-like test-code snippets.
//!
//! The token stream concatenates back to the input byte-for-byte. Snippets in
//! test-code datasets frequently do not compile, so this is a lexical pass
//! only: no parse tree, no symbol table. Unterminated strings and comments do
//! not fail the lexer; the remainder of the input becomes a single `Raw`
//! token and the stream is marked unclean so downstream transforms skip it.

use std::fmt;

/// Lexical class of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Identifier,
    StringLit,
    CharLit,
    Number,
    Comment,
    Punct,
    Whitespace,
    Annotation,
    Keyword,
    /// Unlexable tail (unterminated string or comment).
    Raw,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Identifier => "identifier",
            TokenKind::StringLit => "string-literal",
            TokenKind::CharLit => "char-literal",
            TokenKind::Number => "number",
            TokenKind::Comment => "comment",
            TokenKind::Punct => "punctuation",
            TokenKind::Whitespace => "whitespace",
            TokenKind::Annotation => "annotation",
            TokenKind::Keyword => "keyword",
            TokenKind::Raw => "raw",
        };
        f.write_str(s)
    }
}

/// One token with its byte span in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

/// Result of lexing one snippet. `clean` is false when a `Raw` token had to
/// be emitted.
#[derive(Debug, Clone)]
pub struct Tokenized {
    pub tokens: Vec<Token>,
    pub clean: bool,
}

impl Tokenized {
    /// Tokens that are neither whitespace nor comments.
    pub fn significant(&self) -> impl Iterator<Item = &Token> {
        self.tokens
            .iter()
            .filter(|t| !matches!(t.kind, TokenKind::Whitespace | TokenKind::Comment))
    }
}

/// Java keywords plus the literal words and `var`, all excluded from
/// identifier classification and from generated fresh words.
pub const KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "false", "final", "finally",
    "float", "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long",
    "native", "new", "null", "package", "private", "protected", "public", "return", "short",
    "static", "strictfp", "super", "switch", "synchronized", "this", "throw", "throws", "transient",
    "true", "try", "var", "void", "volatile", "while",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Multi-character operators, longest first so maximal munch works.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "->", "::", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>",
];

/// Lex `code` into a lossless token stream.
pub fn tokenize(code: &str) -> Tokenized {
    let bytes = code.as_bytes();
    let mut tokens = Vec::new();
    let mut clean = true;
    let mut pos = 0;

    while pos < bytes.len() {
        let rest = &code[pos..];
        let c = rest.chars().next().unwrap();

        let (kind, len) = if c.is_ascii_whitespace() {
            (TokenKind::Whitespace, run_len(rest, |c| c.is_ascii_whitespace()))
        } else if rest.starts_with("//") {
            let len = rest.find('\n').unwrap_or(rest.len());
            (TokenKind::Comment, len)
        } else if let Some(tail) = rest.strip_prefix("/*") {
            match tail.find("*/") {
                Some(i) => (TokenKind::Comment, i + 4),
                None => {
                    clean = false;
                    (TokenKind::Raw, rest.len())
                }
            }
        } else if c == '"' {
            match scan_quoted(rest, '"') {
                Some(len) => (TokenKind::StringLit, len),
                None => {
                    clean = false;
                    (TokenKind::Raw, rest.len())
                }
            }
        } else if c == '\'' {
            match scan_quoted(rest, '\'') {
                Some(len) => (TokenKind::CharLit, len),
                None => {
                    clean = false;
                    (TokenKind::Raw, rest.len())
                }
            }
        } else if c == '@' && rest[1..].starts_with(is_ident_start) {
            let len = 1 + run_len(&rest[1..], is_ident_continue);
            (TokenKind::Annotation, len)
        } else if c.is_ascii_digit() {
            (TokenKind::Number, scan_number(rest))
        } else if is_ident_start(c) {
            let len = run_len(rest, is_ident_continue);
            let kind = if is_keyword(&rest[..len]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            (kind, len)
        } else {
            let len = OPERATORS
                .iter()
                .find(|op| rest.starts_with(**op))
                .map_or_else(|| c.len_utf8(), |op| op.len());
            (TokenKind::Punct, len)
        };

        tokens.push(Token {
            kind,
            text: rest[..len].to_string(),
            start: pos,
            end: pos + len,
        });
        pos += len;
    }

    Tokenized { tokens, clean }
}

fn run_len(s: &str, pred: impl Fn(char) -> bool) -> usize {
    s.char_indices()
        .find(|&(_, c)| !pred(c))
        .map_or(s.len(), |(i, _)| i)
}

/// Length of a quoted literal including both quotes, or None if unterminated
/// before end of input (or, for char/string literals, end of line).
fn scan_quoted(s: &str, quote: char) -> Option<usize> {
    let mut chars = s.char_indices().skip(1);
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                chars.next()?;
            }
            '\n' => return None,
            c if c == quote => return Some(i + c.len_utf8()),
            _ => {}
        }
    }
    None
}

/// Java-ish numeric literal: hex/binary prefixes, underscores, fraction,
/// exponent with sign, type suffix. A dot is only consumed when a digit
/// follows, so `1.foo()` keeps the dot as punctuation.
fn scan_number(s: &str) -> usize {
    let bytes = s.as_bytes();
    let mut i = 1;
    if bytes[0] == b'0' && i < bytes.len() && matches!(bytes[i], b'x' | b'X' | b'b' | b'B') {
        i += 1;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
        i += 1;
    }
    if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
        i += 1;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
            i += 1;
        }
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    if i < bytes.len() && matches!(bytes[i], b'l' | b'L' | b'f' | b'F' | b'd' | b'D') {
        i += 1;
    }
    i
}
