//! Total tokenizer for Java source text.
//!
//! Every byte of the input belongs to exactly one token, whitespace included,
//! so concatenating all lexemes reproduces the input.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommentKind {
    Line,
    Block,
    Doc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Whitespace,
    Comment(CommentKind),
    Identifier,
    Keyword,
    Literal,
    Operator,
    Brace,
    Unknown,
}

impl TokenKind {
    pub fn is_trivia(self) -> bool {
        matches!(self, TokenKind::Whitespace | TokenKind::Comment(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    /// 1-based line of the first byte.
    pub line: u32,
    /// 1-based line of the last byte.
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexDiagnostic {
    UnterminatedString { line: u32 },
    UnterminatedChar { line: u32 },
    UnterminatedTextBlock { line: u32 },
    UnterminatedComment { line: u32 },
}

#[derive(Debug, Clone)]
pub struct TokenStream {
    source: String,
    tokens: Vec<Token>,
    diagnostics: Vec<LexDiagnostic>,
    line_count: u32,
}

impl TokenStream {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn lexeme(&self, t: &Token) -> &str {
        &self.source[t.start..t.end]
    }

    pub fn diagnostics(&self) -> &[LexDiagnostic] {
        &self.diagnostics
    }

    /// Number of lines in the source. A trailing newline does not open a
    /// new line; empty input has zero lines.
    pub fn line_count(&self) -> u32 {
        self.line_count
    }

    /// Tokens that are neither whitespace nor comments.
    pub fn significant(&self) -> impl Iterator<Item = (usize, &Token)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.kind.is_trivia())
    }
}

pub const KEYWORDS: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
];

const LITERAL_WORDS: &[&str] = &["true", "false", "null"];

// Longest first within each leading character.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||", "==", "!=", "<=",
    ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "(", ")", "[", "]", ";",
    ",", ".", "@", "=", ">", "<", "!", "~", "?", ":", "+", "-", "*", "/", "&", "|", "^", "%",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    tokens: Vec<Token>,
    diagnostics: Vec<LexDiagnostic>,
}

impl<'a> Lexer<'a> {
    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn byte_at(&self, i: usize) -> Option<u8> {
        self.bytes.get(i).copied()
    }

    fn push(&mut self, kind: TokenKind, start: usize) {
        let end = self.pos;
        let newlines = self.bytes[start..end].iter().filter(|&&b| b == b'\n').count() as u32;
        // A token ending with '\n' (line comments never do, whitespace may)
        // still starts on `line`; its last byte sits on the line it terminates.
        let last_nl = end > start && self.bytes[end - 1] == b'\n';
        let end_line = self.line + newlines - u32::from(last_nl && newlines > 0);
        self.tokens.push(Token {
            kind,
            start,
            end,
            line: self.line,
            end_line,
        });
        self.line += newlines;
    }

    fn run(mut self) -> (Vec<Token>, Vec<LexDiagnostic>) {
        while self.pos < self.bytes.len() {
            let start = self.pos;
            let c = self.peek_char().unwrap_or('\0');
            let kind = if c.is_whitespace() {
                while let Some(ch) = self.peek_char() {
                    if !ch.is_whitespace() {
                        break;
                    }
                    self.pos += ch.len_utf8();
                }
                TokenKind::Whitespace
            } else if c == '/' && self.byte_at(start + 1) == Some(b'/') {
                while let Some(b) = self.byte_at(self.pos) {
                    if b == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
                TokenKind::Comment(CommentKind::Line)
            } else if c == '/' && self.byte_at(start + 1) == Some(b'*') {
                let doc = self.byte_at(start + 2) == Some(b'*') && self.byte_at(start + 3) != Some(b'/');
                match self.src[start + 2..].find("*/") {
                    Some(i) => self.pos = start + 2 + i + 2,
                    None => {
                        self.pos = self.bytes.len();
                        self.diagnostics
                            .push(LexDiagnostic::UnterminatedComment { line: self.line });
                    }
                }
                TokenKind::Comment(if doc {
                    CommentKind::Doc
                } else {
                    CommentKind::Block
                })
            } else if c == '"' {
                if self.src[start..].starts_with("\"\"\"") {
                    self.text_block(start);
                } else {
                    self.quoted(start, b'"');
                }
                TokenKind::Literal
            } else if c == '\'' {
                self.quoted(start, b'\'');
                TokenKind::Literal
            } else if c.is_ascii_digit()
                || (c == '.' && self.byte_at(start + 1).is_some_and(|b| b.is_ascii_digit()))
            {
                self.number();
                TokenKind::Literal
            } else if c.is_alphabetic() || c == '_' || c == '$' {
                while let Some(ch) = self.peek_char() {
                    if !(ch.is_alphanumeric() || ch == '_' || ch == '$') {
                        break;
                    }
                    self.pos += ch.len_utf8();
                }
                let word = &self.src[start..self.pos];
                if LITERAL_WORDS.contains(&word) {
                    TokenKind::Literal
                } else if is_keyword(word) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                }
            } else if c == '{' || c == '}' {
                self.pos += 1;
                TokenKind::Brace
            } else if let Some(op) = OPERATORS.iter().find(|op| self.src[start..].starts_with(**op)) {
                self.pos += op.len();
                TokenKind::Operator
            } else {
                self.pos += c.len_utf8();
                TokenKind::Unknown
            };
            self.push(kind, start);
        }
        (self.tokens, self.diagnostics)
    }

    fn quoted(&mut self, start: usize, quote: u8) {
        self.pos = start + 1;
        loop {
            match self.byte_at(self.pos) {
                None | Some(b'\n') => {
                    let line = self.line;
                    self.diagnostics.push(if quote == b'"' {
                        LexDiagnostic::UnterminatedString { line }
                    } else {
                        LexDiagnostic::UnterminatedChar { line }
                    });
                    // Strip a carriage return so the literal ends on its line.
                    if self.pos > start + 1 && self.byte_at(self.pos - 1) == Some(b'\r') {
                        self.pos -= 1;
                    }
                    return;
                }
                Some(b'\\') => {
                    self.pos += 1;
                    if let Some(b) = self.byte_at(self.pos) {
                        if b != b'\n' {
                            self.pos += utf8_len(b);
                        }
                    }
                }
                Some(b) if b == quote => {
                    self.pos += 1;
                    return;
                }
                Some(b) => self.pos += utf8_len(b),
            }
        }
    }

    fn text_block(&mut self, start: usize) {
        self.pos = start + 3;
        loop {
            match self.byte_at(self.pos) {
                None => {
                    self.diagnostics
                        .push(LexDiagnostic::UnterminatedTextBlock { line: self.line });
                    return;
                }
                Some(b'\\') => {
                    self.pos += 1;
                    if let Some(b) = self.byte_at(self.pos) {
                        self.pos += utf8_len(b);
                    }
                }
                Some(b'"') if self.src[self.pos..].starts_with("\"\"\"") => {
                    self.pos += 3;
                    return;
                }
                Some(b) => self.pos += utf8_len(b),
            }
        }
    }

    fn number(&mut self) {
        let start = self.pos;
        let hex = self.src[start..].starts_with("0x") || self.src[start..].starts_with("0X");
        while let Some(b) = self.byte_at(self.pos) {
            let prev = self.pos.checked_sub(1).and_then(|i| self.byte_at(i));
            let exponent_sign = (b == b'+' || b == b'-')
                && self.pos > start
                && match prev {
                    Some(b'e' | b'E') => !hex,
                    Some(b'p' | b'P') => hex,
                    _ => false,
                };
            let dot = b == b'.' && self.byte_at(self.pos + 1).is_none_or(|n| n != b'.');
            if b.is_ascii_alphanumeric() || b == b'_' || dot || exponent_sign {
                // `1.foo()` is not valid Java, but keep member access out of numbers.
                if b == b'.'
                    && self
                        .byte_at(self.pos + 1)
                        .is_some_and(|n| n.is_ascii_alphabetic() && !matches!(n, b'e' | b'E' | b'f' | b'F' | b'd' | b'D'))
                {
                    break;
                }
                self.pos += 1;
            } else {
                break;
            }
        }
    }
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7F => 1,
        0xC0..=0xDF => 2,
        0xE0..=0xEF => 3,
        0xF0..=0xF7 => 4,
        _ => 1,
    }
}

/// Splits Java source into tokens.
pub fn tokenize(source: &str) -> TokenStream {
    let lexer = Lexer {
        src: source,
        bytes: source.as_bytes(),
        pos: 0,
        line: 1,
        tokens: Vec::new(),
        diagnostics: Vec::new(),
    };
    let (tokens, diagnostics) = lexer.run();
    let newlines = source.bytes().filter(|&b| b == b'\n').count() as u32;
    let line_count = if source.is_empty() {
        0
    } else if source.ends_with('\n') {
        newlines
    } else {
        newlines + 1
    };
    TokenStream {
        source: source.to_string(),
        tokens,
        diagnostics,
        line_count,
    }
}
