//! Unified diff parsing and line-range mapping.
//!
//! The parser accepts the output of `git diff`, plain `diff -u`, and the
//! per-file `patch` fragments returned by hosting APIs (hunks without file
//! headers, see [`parse_hunks`]).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::java::SourceElement;

pub const DEV_NULL: &str = "/dev/null";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiffError {
    #[error("malformed hunk header at line {line} (byte {offset}): {text:?}")]
    BadHunkHeader {
        line: usize,
        offset: usize,
        text: String,
    },
    #[error("hunk starting at line {line} ends early: expected {expected_old} old / {expected_new} new lines")]
    TruncatedHunk {
        line: usize,
        expected_old: u32,
        expected_new: u32,
    },
    #[error("unexpected line inside hunk at line {line} (byte {offset}): {text:?}")]
    BadHunkLine {
        line: usize,
        offset: usize,
        text: String,
    },
    #[error("hunk found outside of a file section at line {line} (byte {offset})")]
    OrphanHunk { line: usize, offset: usize },
    #[error("replay mismatch at old line {line}: expected {expected:?}, found {found:?}")]
    ReplayMismatch {
        line: u32,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineTag {
    Context,
    Add,
    Del,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkLine {
    pub tag: LineTag,
    pub text: String,
    /// Set when the line was followed by `\ No newline at end of file`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_eol: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: u32,
    pub old_len: u32,
    pub new_start: u32,
    pub new_len: u32,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    /// Checks that the body line counts agree with the header.
    pub fn is_consistent(&self) -> bool {
        let old = self
            .lines
            .iter()
            .filter(|l| l.tag != LineTag::Add)
            .count();
        let new = self
            .lines
            .iter()
            .filter(|l| l.tag != LineTag::Del)
            .count();
        old == self.old_len as usize && new == self.new_len as usize
    }

    /// Number of old-file lines that precede this hunk.
    fn old_prefix(&self) -> u32 {
        if self.old_len == 0 {
            self.old_start
        } else {
            self.old_start.saturating_sub(1)
        }
    }

    fn new_first(&self) -> u32 {
        if self.new_len == 0 {
            self.new_start + 1
        } else {
            self.new_start
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub old_path: String,
    pub new_path: String,
    pub hunks: Vec<Hunk>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub binary: bool,
}

impl FileDiff {
    pub fn is_addition(&self) -> bool {
        self.old_path == DEV_NULL
    }

    pub fn is_deletion(&self) -> bool {
        self.new_path == DEV_NULL
    }

    pub fn is_rename(&self) -> bool {
        !self.is_addition() && !self.is_deletion() && self.old_path != self.new_path
    }

    /// Path of the given side, `None` when that side does not exist.
    pub fn path(&self, side: Side) -> Option<&str> {
        let p = match side {
            Side::Old => &self.old_path,
            Side::New => &self.new_path,
        };
        (p != DEV_NULL).then_some(p.as_str())
    }

    /// Applies the hunks to `old` and returns the new text.
    pub fn apply(&self, old: &str) -> Result<String, DiffError> {
        let old_lines = split_lines(old);
        let mut out = String::with_capacity(old.len());
        let mut cursor = 0usize; // index into old_lines
        for hunk in &self.hunks {
            let prefix = hunk.old_prefix() as usize;
            while cursor < prefix && cursor < old_lines.len() {
                out.push_str(old_lines[cursor]);
                cursor += 1;
            }
            for line in &hunk.lines {
                match line.tag {
                    LineTag::Context | LineTag::Del => {
                        let found = old_lines.get(cursor).copied().unwrap_or("");
                        let expected = render_line(line);
                        if found != expected {
                            return Err(DiffError::ReplayMismatch {
                                line: cursor as u32 + 1,
                                expected,
                                found: found.to_string(),
                            });
                        }
                        if line.tag == LineTag::Context {
                            out.push_str(found);
                        }
                        cursor += 1;
                    }
                    LineTag::Add => out.push_str(&render_line(line)),
                }
            }
        }
        for line in &old_lines[cursor.min(old_lines.len())..] {
            out.push_str(line);
        }
        Ok(out)
    }
}

fn render_line(line: &HunkLine) -> String {
    if line.no_eol {
        line.text.clone()
    } else {
        format!("{}\n", line.text)
    }
}

/// Splits text into lines that keep their terminating `\n`.
fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Old,
    New,
}

/// Sorted, disjoint, non-adjacent inclusive line intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineRangeSet {
    ranges: Vec<(u32, u32)>,
}

impl LineRangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_lines<I: IntoIterator<Item = u32>>(lines: I) -> Self {
        let mut set = Self::new();
        for l in lines {
            set.insert(l, l);
        }
        set
    }

    pub fn insert(&mut self, start: u32, end: u32) {
        debug_assert!(start <= end);
        let mut lo = start;
        let mut hi = end;
        let mut merged = Vec::with_capacity(self.ranges.len() + 1);
        let mut placed = false;
        for &(s, e) in &self.ranges {
            if e.saturating_add(1) < lo {
                merged.push((s, e));
            } else if hi.saturating_add(1) < s {
                if !placed {
                    merged.push((lo, hi));
                    placed = true;
                }
                merged.push((s, e));
            } else {
                lo = lo.min(s);
                hi = hi.max(e);
            }
        }
        if !placed {
            merged.push((lo, hi));
        }
        self.ranges = merged;
    }

    pub fn ranges(&self) -> &[(u32, u32)] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, line: u32) -> bool {
        self.intersects(line, line)
    }

    /// True when `[start, end]` shares at least one line with the set.
    pub fn intersects(&self, start: u32, end: u32) -> bool {
        let idx = self.ranges.partition_point(|&(_, e)| e < start);
        self.ranges.get(idx).is_some_and(|&(s, _)| s <= end)
    }

    pub fn lines(&self) -> impl Iterator<Item = u32> + '_ {
        self.ranges.iter().flat_map(|&(s, e)| s..=e)
    }

    pub fn len(&self) -> usize {
        self.ranges.iter().map(|&(s, e)| (e - s + 1) as usize).sum()
    }
}

impl fmt::Display for LineRangeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .ranges
            .iter()
            .map(|&(s, e)| {
                if s == e {
                    s.to_string()
                } else {
                    format!("{s}-{e}")
                }
            })
            .collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Line numbers touched by a diff on one side: deleted lines on the old
/// side, added lines on the new side. Context lines never count.
pub fn modified_ranges(diff: &FileDiff, side: Side) -> LineRangeSet {
    let mut set = LineRangeSet::new();
    for hunk in &diff.hunks {
        let mut old_line = hunk.old_prefix() + 1;
        let mut new_line = hunk.new_first();
        for line in &hunk.lines {
            match line.tag {
                LineTag::Context => {
                    old_line += 1;
                    new_line += 1;
                }
                LineTag::Del => {
                    if side == Side::Old {
                        set.insert(old_line, old_line);
                    }
                    old_line += 1;
                }
                LineTag::Add => {
                    if side == Side::New {
                        set.insert(new_line, new_line);
                    }
                    new_line += 1;
                }
            }
        }
    }
    set
}

/// Elements whose line span intersects any of the ranges.
pub fn touched_elements<'a>(
    ranges: &LineRangeSet,
    elements: &'a [SourceElement],
) -> Vec<&'a SourceElement> {
    elements
        .iter()
        .filter(|e| ranges.intersects(e.start_line, e.end_line))
        .collect()
}

/// FQNs of the elements touched by the ranges.
pub fn elements_touched(ranges: &LineRangeSet, elements: &[SourceElement]) -> BTreeSet<String> {
    touched_elements(ranges, elements)
        .into_iter()
        .map(|e| e.fqn.clone())
        .collect()
}

struct Cursor<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        let mut lines = Vec::new();
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            // A trailing CR belongs to the file content (CRLF sources).
            let line = raw.strip_suffix('\n').unwrap_or(raw);
            lines.push((offset, line));
            offset += raw.len();
        }
        Self { lines, pos: 0 }
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).map(|&(_, l)| l)
    }

    fn line_no(&self) -> usize {
        self.pos + 1
    }

    fn offset(&self) -> usize {
        self.lines.get(self.pos).map_or(0, |&(o, _)| o)
    }
}

/// Parses a multi-file unified diff.
///
/// Text outside file sections (commit headers, `index` lines, mode lines)
/// is skipped. Hunk bodies must reconcile with their headers.
pub fn parse_unified_diff(text: &str) -> Result<Vec<FileDiff>, DiffError> {
    let mut cur = Cursor::new(text);
    let mut files: Vec<FileDiff> = Vec::new();
    // The file section currently accepting hunks.
    let mut open: Option<FileDiff> = None;

    while let Some(line) = cur.peek() {
        if let Some(rest) = line.strip_prefix("diff --git ") {
            if let Some(f) = open.take() {
                files.push(f);
            }
            let (a, b) = split_git_paths(rest);
            open = Some(FileDiff {
                old_path: a,
                new_path: b,
                hunks: Vec::new(),
                binary: false,
            });
            cur.pos += 1;
        } else if line.starts_with("--- ")
            && cur
                .lines
                .get(cur.pos + 1)
                .is_some_and(|&(_, l)| l.starts_with("+++ "))
        {
            let old = header_path(&line[4..]);
            let new = header_path(&cur.lines[cur.pos + 1].1[4..]);
            match open.as_mut() {
                Some(f) if f.hunks.is_empty() => {
                    f.old_path = old;
                    f.new_path = new;
                }
                _ => {
                    if let Some(f) = open.take() {
                        files.push(f);
                    }
                    open = Some(FileDiff {
                        old_path: old,
                        new_path: new,
                        hunks: Vec::new(),
                        binary: false,
                    });
                }
            }
            cur.pos += 2;
        } else if line.starts_with("@@") {
            let Some(f) = open.as_mut() else {
                return Err(DiffError::OrphanHunk {
                    line: cur.line_no(),
                    offset: cur.offset(),
                });
            };
            let hunk = parse_hunk(&mut cur)?;
            f.hunks.push(hunk);
        } else {
            if let Some(f) = open.as_mut() {
                if f.hunks.is_empty() {
                    apply_extended_header(f, line);
                }
            }
            cur.pos += 1;
        }
    }
    if let Some(f) = open.take() {
        files.push(f);
    }
    for f in &mut files {
        f.hunks.sort_by_key(|h| h.old_start);
    }
    Ok(files)
}

/// Parses a bare hunk sequence (no file headers) for the given paths.
pub fn parse_hunks(old_path: &str, new_path: &str, patch: &str) -> Result<FileDiff, DiffError> {
    let mut cur = Cursor::new(patch);
    let mut diff = FileDiff {
        old_path: old_path.to_string(),
        new_path: new_path.to_string(),
        hunks: Vec::new(),
        binary: false,
    };
    while let Some(line) = cur.peek() {
        if line.starts_with("@@") {
            diff.hunks.push(parse_hunk(&mut cur)?);
        } else if line.is_empty() {
            cur.pos += 1;
        } else {
            return Err(DiffError::BadHunkLine {
                line: cur.line_no(),
                offset: cur.offset(),
                text: line.to_string(),
            });
        }
    }
    Ok(diff)
}

fn apply_extended_header(f: &mut FileDiff, line: &str) {
    if let Some(p) = line.strip_prefix("rename from ") {
        f.old_path = p.to_string();
    } else if let Some(p) = line.strip_prefix("rename to ") {
        f.new_path = p.to_string();
    } else if line.starts_with("new file mode") {
        f.old_path = DEV_NULL.to_string();
    } else if line.starts_with("deleted file mode") {
        f.new_path = DEV_NULL.to_string();
    } else if line.starts_with("Binary files") || line.starts_with("GIT binary patch") {
        f.binary = true;
    }
}

fn split_git_paths(rest: &str) -> (String, String) {
    // `a/x b/y`; paths with spaces are ambiguous, prefer the symmetric split.
    if let Some(idx) = rest.find(" b/") {
        let a = &rest[..idx];
        let b = &rest[idx + 1..];
        return (strip_prefix_ab(a), strip_prefix_ab(b));
    }
    let mut parts = rest.splitn(2, ' ');
    let a = parts.next().unwrap_or_default();
    let b = parts.next().unwrap_or(a);
    (strip_prefix_ab(a), strip_prefix_ab(b))
}

fn strip_prefix_ab(p: &str) -> String {
    let p = p.trim_matches('"');
    p.strip_prefix("a/")
        .or_else(|| p.strip_prefix("b/"))
        .unwrap_or(p)
        .to_string()
}

fn header_path(raw: &str) -> String {
    let path = raw.split('\t').next().unwrap_or(raw).trim_end();
    if path == DEV_NULL {
        return DEV_NULL.to_string();
    }
    strip_prefix_ab(path)
}

fn parse_range(s: &str) -> Option<(u32, u32)> {
    let mut it = s.splitn(2, ',');
    let start = it.next()?.parse().ok()?;
    let len = match it.next() {
        Some(l) => l.parse().ok()?,
        None => 1,
    };
    Some((start, len))
}

fn parse_header(line: &str) -> Option<(u32, u32, u32, u32)> {
    let body = line.strip_prefix("@@ ")?;
    let end = body.find(" @@")?;
    let mut parts = body[..end].split_whitespace();
    let old = parts.next()?.strip_prefix('-')?;
    let new = parts.next()?.strip_prefix('+')?;
    if parts.next().is_some() {
        return None;
    }
    let (os, ol) = parse_range(old)?;
    let (ns, nl) = parse_range(new)?;
    Some((os, ol, ns, nl))
}

fn parse_hunk(cur: &mut Cursor<'_>) -> Result<Hunk, DiffError> {
    let header_line = cur.line_no();
    let line = cur.peek().unwrap_or_default();
    let (old_start, old_len, new_start, new_len) =
        parse_header(line).ok_or_else(|| DiffError::BadHunkHeader {
            line: cur.line_no(),
            offset: cur.offset(),
            text: line.to_string(),
        })?;
    cur.pos += 1;
    let mut hunk = Hunk {
        old_start,
        old_len,
        new_start,
        new_len,
        lines: Vec::new(),
    };
    let (mut old_seen, mut new_seen) = (0u32, 0u32);
    while old_seen < old_len || new_seen < new_len {
        let Some(text) = cur.peek() else {
            return Err(DiffError::TruncatedHunk {
                line: header_line,
                expected_old: old_len,
                expected_new: new_len,
            });
        };
        let (tag, body) = match text.chars().next() {
            Some(' ') => (LineTag::Context, &text[1..]),
            Some('+') => (LineTag::Add, &text[1..]),
            Some('-') => (LineTag::Del, &text[1..]),
            // Some tools strip the single space of blank context lines.
            None => (LineTag::Context, ""),
            Some('\\') => {
                mark_no_eol(&mut hunk);
                cur.pos += 1;
                continue;
            }
            Some(_) => {
                return Err(DiffError::TruncatedHunk {
                    line: header_line,
                    expected_old: old_len,
                    expected_new: new_len,
                })
            }
        };
        match tag {
            LineTag::Context => {
                old_seen += 1;
                new_seen += 1;
            }
            LineTag::Del => old_seen += 1,
            LineTag::Add => new_seen += 1,
        }
        if old_seen > old_len || new_seen > new_len {
            return Err(DiffError::BadHunkLine {
                line: cur.line_no(),
                offset: cur.offset(),
                text: text.to_string(),
            });
        }
        hunk.lines.push(HunkLine {
            tag,
            text: body.to_string(),
            no_eol: false,
        });
        cur.pos += 1;
    }
    // A trailing no-newline marker belongs to the last line of the hunk.
    while let Some(text) = cur.peek() {
        if text.starts_with('\\') {
            mark_no_eol(&mut hunk);
            cur.pos += 1;
        } else {
            break;
        }
    }
    Ok(hunk)
}

fn mark_no_eol(hunk: &mut Hunk) {
    if let Some(last) = hunk.lines.last_mut() {
        last.no_eol = true;
    }
}

/// Renders a file diff back to unified diff text (`git`-style headers).
pub fn render_unified(diff: &FileDiff) -> String {
    let mut out = String::new();
    let old = if diff.is_addition() {
        DEV_NULL.to_string()
    } else {
        format!("a/{}", diff.old_path)
    };
    let new = if diff.is_deletion() {
        DEV_NULL.to_string()
    } else {
        format!("b/{}", diff.new_path)
    };
    out.push_str(&format!("--- {old}\n+++ {new}\n"));
    for h in &diff.hunks {
        out.push_str(&format!(
            "@@ -{},{} +{},{} @@\n",
            h.old_start, h.old_len, h.new_start, h.new_len
        ));
        for l in &h.lines {
            let c = match l.tag {
                LineTag::Context => ' ',
                LineTag::Add => '+',
                LineTag::Del => '-',
            };
            out.push(c);
            out.push_str(&l.text);
            out.push('\n');
            if l.no_eol {
                out.push_str("\\ No newline at end of file\n");
            }
        }
    }
    out
}
