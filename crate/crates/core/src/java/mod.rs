//! Structural analysis of Java source: files, classes and methods with
//! their line spans and fully-qualified names.
//!
//! Recognition is brace matching over the token stream, not a grammar.
//! Anonymous and local classes are part of the method that contains them;
//! generic arguments are erased from names; array suffixes are kept.

mod lexer;
mod parse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use lexer::{is_keyword, tokenize, CommentKind, LexDiagnostic, Token, TokenKind, TokenStream};
pub use parse::{parse_file, ClassDecl, FieldDecl, MethodDecl, Modifiers, ParsedFile, TypeKind};

/// Granularity of a source element; doubles as the dataset level.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    File,
    Class,
    Method,
}

impl ElementKind {
    pub const ALL: [ElementKind; 3] = [ElementKind::File, ElementKind::Class, ElementKind::Method];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::File => "file",
            ElementKind::Class => "class",
            ElementKind::Method => "method",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" => Ok(ElementKind::File),
            "class" => Ok(ElementKind::Class),
            "method" => Ok(ElementKind::Method),
            other => Err(format!("unknown element kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceElement {
    pub kind: ElementKind,
    pub fqn: String,
    pub path: String,
    pub start_line: u32,
    pub end_line: u32,
    /// Enclosing class of a method or nested class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_fqn: Option<String>,
}

/// Elements of one file: the file itself, then classes and methods in
/// declaration order.
pub fn parse_elements(path: &str, tokens: &TokenStream) -> Vec<SourceElement> {
    parse_file(path, tokens).elements()
}

/// Test-path exclusion with `*`, `**` and `?` globs over `/`-separated paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathFilter {
    pub exclude: Vec<String>,
}

impl Default for PathFilter {
    fn default() -> Self {
        Self {
            exclude: vec!["**/test/**".to_string()],
        }
    }
}

impl PathFilter {
    pub fn none() -> Self {
        Self {
            exclude: Vec::new(),
        }
    }

    /// True for `.java` paths not matched by any exclusion glob.
    pub fn accepts(&self, path: &str) -> bool {
        path.ends_with(".java") && !self.exclude.iter().any(|g| glob_match(g, path))
    }
}

fn glob_match(pattern: &str, path: &str) -> bool {
    let pat: Vec<&str> = pattern.split('/').collect();
    let segs: Vec<&str> = path.split('/').collect();
    match_segments(&pat, &segs)
}

fn match_segments(pat: &[&str], segs: &[&str]) -> bool {
    match pat.split_first() {
        None => segs.is_empty(),
        Some((&"**", rest)) => (0..=segs.len()).any(|i| match_segments(rest, &segs[i..])),
        Some((p, rest)) => match segs.split_first() {
            Some((s, srest)) => match_segment(p.as_bytes(), s.as_bytes()) && match_segments(rest, srest),
            None => false,
        },
    }
}

fn match_segment(p: &[u8], s: &[u8]) -> bool {
    match p.split_first() {
        None => s.is_empty(),
        Some((b'*', rest)) => (0..=s.len()).any(|i| match_segment(rest, &s[i..])),
        Some((b'?', rest)) => !s.is_empty() && match_segment(rest, &s[1..]),
        Some((c, rest)) => s.first() == Some(c) && match_segment(rest, &s[1..]),
    }
}
