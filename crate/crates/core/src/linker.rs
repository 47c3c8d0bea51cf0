//! Links bug reports to commits and sorts the related commits into roles:
//! the orange commit right before the first fix, the green fixing commits,
//! gray commits between fixes and blue commits between the report and the
//! first fix.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{IssueRecord, IssueState, ProjectSnapshot};

/// Which `#x` occurrences count as references.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefMode {
    /// Any `#x` token.
    #[default]
    Any,
    /// Only `#x` after a closing keyword such as "fixes".
    KeywordOnly,
}

impl FromStr for RefMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "any" => Ok(RefMode::Any),
            "keyword-only" => Ok(RefMode::KeywordOnly),
            other => Err(format!("unknown reference mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IssueRef {
    pub id: u64,
    /// No word boundary before `#`, as in `version#2`.
    pub low_confidence: bool,
    /// `owner/repo#x`; recorded but never linked.
    pub cross_repo: bool,
    pub keyword: bool,
}

const KEYWORDS: &[&str] = &[
    "fix", "fixes", "fixed", "close", "closes", "closed", "resolve", "resolves", "resolved",
];

fn ends_with_keyword(before: &str) -> bool {
    let trimmed = before.trim_end_matches(|c: char| c.is_whitespace() || c == ':');
    let word_start = trimmed
        .rfind(|c: char| !c.is_alphanumeric())
        .map_or(0, |i| i + trimmed[i..].chars().next().map_or(1, char::len_utf8));
    let word = &trimmed[word_start..];
    KEYWORDS.iter().any(|k| word.eq_ignore_ascii_case(k))
}

/// `#x` tokens of a commit message, one per distinct id. When an id occurs
/// several times, the strongest occurrence is kept.
pub fn extract_issue_refs(message: &str, mode: RefMode) -> Vec<IssueRef> {
    let bytes = message.as_bytes();
    let mut found: BTreeMap<u64, IssueRef> = BTreeMap::new();
    let mut prev_end: Option<(usize, bool)> = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'#' {
            i += 1;
            continue;
        }
        let digits_end = bytes[i + 1..]
            .iter()
            .position(|b| !b.is_ascii_digit())
            .map_or(bytes.len(), |p| i + 1 + p);
        if digits_end == i + 1 {
            i += 1;
            continue;
        }
        let before = &message[..i];
        let prev_char = before.chars().next_back();
        let span_start = before
            .rfind(|c: char| !(c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | '/')))
            .map_or(0, |p| p + 1);
        let span = &before[span_start..];
        let cross_repo = span
            .split_once('/')
            .is_some_and(|(owner, repo)| !owner.is_empty() && !repo.is_empty() && !repo.contains('/'));
        let low_confidence = prev_char.is_some_and(|c| c.is_alphanumeric() || c == '_');
        let mut keyword = ends_with_keyword(before);
        if !keyword {
            if let Some((end, true)) = prev_end {
                let between = message[end..i].trim();
                let between = between.trim_matches(',').trim();
                keyword = between.is_empty() || between.eq_ignore_ascii_case("and");
            }
        }
        prev_end = Some((digits_end, keyword));
        i = digits_end;

        let Ok(id) = message[before.len() + 1..digits_end].parse::<u64>() else {
            continue;
        };
        if id == 0 || (mode == RefMode::KeywordOnly && !keyword) {
            continue;
        }
        let r = IssueRef {
            id,
            low_confidence,
            cross_repo,
            keyword,
        };
        found
            .entry(id)
            .and_modify(|old| {
                // Prefer local over cross-repo, then confident, then keyworded.
                let rank = |x: &IssueRef| (!x.cross_repo, !x.low_confidence, x.keyword);
                if rank(&r) > rank(old) {
                    *old = r;
                }
            })
            .or_insert(r);
    }
    found.into_values().collect()
}

/// Ids of same-repository references.
pub fn referenced_issue_ids(message: &str, mode: RefMode) -> Vec<u64> {
    extract_issue_refs(message, mode)
        .into_iter()
        .filter(|r| !r.cross_repo)
        .map(|r| r.id)
        .collect()
}

/// The first-parent chain of the branch tip. Commits off the chain map to
/// the position of the merge that brings them in.
#[derive(Debug, Clone)]
pub struct HistoryIndex {
    chain: Vec<String>,
    position: HashMap<String, usize>,
    first_parent: HashMap<String, String>,
    timestamps: Vec<chrono::DateTime<chrono::Utc>>,
}

impl HistoryIndex {
    pub fn new(snapshot: &ProjectSnapshot) -> Self {
        let mut chain = Vec::new();
        let mut seen = HashSet::new();
        let mut cur = snapshot.head_commit();
        while let Some(c) = cur {
            if !seen.insert(c.hash.as_str()) {
                break;
            }
            chain.push(c.hash.clone());
            cur = c.parents.first().and_then(|p| snapshot.commit(p));
        }
        chain.reverse();
        let mut position: HashMap<String, usize> =
            chain.iter().enumerate().map(|(i, h)| (h.clone(), i)).collect();
        for (i, h) in chain.iter().enumerate() {
            let Some(c) = snapshot.commit(h) else { continue };
            let mut stack: Vec<&str> = c.parents.iter().skip(1).map(String::as_str).collect();
            while let Some(p) = stack.pop() {
                if position.contains_key(p) {
                    continue;
                }
                let Some(pc) = snapshot.commit(p) else { continue };
                position.insert(p.to_string(), i);
                stack.extend(pc.parents.iter().map(String::as_str));
            }
        }
        let first_parent = snapshot
            .commits
            .iter()
            .filter_map(|c| c.parents.first().map(|p| (c.hash.clone(), p.clone())))
            .collect();
        let timestamps = chain
            .iter()
            .map(|h| snapshot.commit(h).map(|c| c.timestamp).unwrap_or_default())
            .collect();
        Self {
            chain,
            position,
            first_parent,
            timestamps,
        }
    }

    pub fn chain(&self) -> &[String] {
        &self.chain
    }

    pub fn position(&self, hash: &str) -> Option<usize> {
        self.position.get(hash).copied()
    }

    pub fn on_chain(&self, hash: &str) -> bool {
        self.position(hash)
            .is_some_and(|p| self.chain[p] == hash)
    }

    pub fn first_parent(&self, hash: &str) -> Option<&str> {
        self.first_parent.get(hash).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Degradation {
    /// Fixing commits that are not in the snapshot or not on the branch.
    MissingCommits { hashes: Vec<String> },
    /// The first fix is the root commit, so there is no state before it.
    NoParent { hash: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugFixTimeline {
    pub issue_id: u64,
    pub orange: String,
    /// Fixing commits in history order.
    pub green: Vec<String>,
    pub gray: Vec<String>,
    /// Chain commits from the report up to and including orange.
    pub blue: Vec<String>,
    /// Chain commit holding the fixed state (the last green, or the merge
    /// that brought it in).
    pub fixed: String,
    /// Chain positions of the buggy interval `[start, end)`: blue, orange,
    /// grays and all but the last green.
    pub buggy_start: usize,
    pub buggy_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<Degradation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl BugFixTimeline {
    fn degraded(issue_id: u64, d: Degradation) -> Self {
        Self {
            issue_id,
            orange: String::new(),
            green: Vec::new(),
            gray: Vec::new(),
            blue: Vec::new(),
            fixed: String::new(),
            buggy_start: 0,
            buggy_end: 0,
            degraded: Some(d),
            notes: Vec::new(),
        }
    }

    pub fn is_degraded(&self) -> bool {
        self.degraded.is_some()
    }

    pub fn last_green(&self) -> Option<&str> {
        self.green.last().map(String::as_str)
    }

    pub fn covers(&self, position: usize) -> bool {
        !self.is_degraded() && self.buggy_start <= position && position < self.buggy_end
    }
}

/// Where the buggy interval starts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuggyInterval {
    /// From the first commit at or after the report date.
    #[default]
    FromIssueCreation,
    /// Only from the orange commit.
    OrangeOnly,
}

pub fn build_timeline(issue: &IssueRecord, snapshot: &ProjectSnapshot) -> BugFixTimeline {
    build_timeline_with(issue, snapshot, &HistoryIndex::new(snapshot), BuggyInterval::default())
}

pub fn build_timeline_with(
    issue: &IssueRecord,
    snapshot: &ProjectSnapshot,
    history: &HistoryIndex,
    interval: BuggyInterval,
) -> BugFixTimeline {
    let mut hashes: Vec<&str> = issue.fixing_commits.iter().map(|f| f.hash.as_str()).collect();
    if let Some(c) = &issue.closed_by {
        hashes.push(c);
    }
    let mut missing = Vec::new();
    let mut greens: Vec<(usize, usize, &str)> = Vec::new();
    for (order, h) in hashes.iter().enumerate() {
        match history.position(h) {
            Some(p) => greens.push((p, order, h)),
            None => missing.push(h.to_string()),
        }
    }
    if !missing.is_empty() || greens.is_empty() {
        missing.sort();
        missing.dedup();
        return BugFixTimeline::degraded(issue.id, Degradation::MissingCommits { hashes: missing });
    }
    greens.sort();
    let mut seen = HashSet::new();
    greens.retain(|g| seen.insert(g.2));

    let first_pos = greens[0].0;
    let last_pos = greens[greens.len() - 1].0;
    if first_pos == 0 {
        return BugFixTimeline::degraded(
            issue.id,
            Degradation::NoParent {
                hash: greens[0].2.to_string(),
            },
        );
    }
    let orange_pos = first_pos - 1;
    let green_positions: HashSet<usize> = greens.iter().map(|g| g.0).collect();
    let gray: Vec<String> = (first_pos + 1..last_pos)
        .filter(|p| !green_positions.contains(p))
        .map(|p| history.chain[p].clone())
        .collect();
    let blue_start = match interval {
        BuggyInterval::OrangeOnly => orange_pos,
        BuggyInterval::FromIssueCreation => (0..=orange_pos)
            .find(|&p| history.timestamps[p] >= issue.created_at)
            .unwrap_or(orange_pos),
    };
    let blue = history.chain[blue_start..=orange_pos].to_vec();

    let mut notes = Vec::new();
    if let Some(c) = &issue.closed_by {
        let referenced = snapshot
            .commit(c)
            .is_some_and(|rec| referenced_issue_ids(&rec.message, RefMode::Any).contains(&issue.id));
        if !referenced {
            notes.push(format!("closing commit {c} does not reference #{}", issue.id));
        }
    }
    for &(p, _, h) in &greens {
        if history.chain[p] != h {
            notes.push(format!("fix {h} reached the branch through merge {}", history.chain[p]));
        }
    }

    BugFixTimeline {
        issue_id: issue.id,
        orange: history.chain[orange_pos].clone(),
        green: greens.iter().map(|g| g.2.to_string()).collect(),
        gray,
        blue,
        fixed: history.chain[last_pos].clone(),
        buggy_start: blue_start,
        buggy_end: last_pos,
        degraded: None,
        notes,
    }
}

/// Timelines of every closed issue of the snapshot, in issue order.
pub fn build_timelines(snapshot: &ProjectSnapshot, interval: BuggyInterval) -> Vec<BugFixTimeline> {
    let history = HistoryIndex::new(snapshot);
    snapshot
        .issues
        .par_iter()
        .filter(|i| i.state == IssueState::Closed)
        .map(|i| build_timeline_with(i, snapshot, &history, interval))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub hash: String,
    pub full_analysis: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisPlan {
    pub entries: Vec<PlanEntry>,
    /// Extra commits whose element positions are needed to map fix diffs:
    /// the first parents of green commits and off-branch greens.
    #[serde(default)]
    pub support: Vec<String>,
}

impl AnalysisPlan {
    pub fn commit_hashes(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.hash.as_str())
    }

    pub fn is_full(&self, hash: &str) -> bool {
        self.entries.iter().any(|e| e.hash == hash && e.full_analysis)
    }

    /// One `hash full|pos` line per entry.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{} {}\n", e.hash, if e.full_analysis { "full" } else { "pos" }))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (hash, kind) = line
                .split_once(' ')
                .ok_or_else(|| format!("line {}: expected `hash full|pos`", n + 1))?;
            let full_analysis = match kind.trim() {
                "full" => true,
                "pos" => false,
                other => return Err(format!("line {}: unknown analysis kind `{other}`", n + 1)),
            };
            entries.push(PlanEntry {
                hash: hash.to_string(),
                full_analysis,
            });
        }
        Ok(Self {
            entries,
            support: Vec::new(),
        })
    }
}

impl fmt::Display for AnalysisPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Orange and last-green (fixed) states need full analysis; other greens
/// only need element positions. Degraded timelines are skipped.
pub fn select_analysis_commits(timelines: &[BugFixTimeline], history: &HistoryIndex) -> AnalysisPlan {
    // Off-branch commits sort before the merge that brings them in.
    let order = |h: &str| (history.position(h).unwrap_or(usize::MAX), history.on_chain(h));
    let mut kinds: HashMap<String, bool> = HashMap::new();
    let mut mark = |h: &str, full: bool| {
        let e = kinds.entry(h.to_string()).or_insert(full);
        *e |= full;
    };
    let mut support: HashSet<String> = HashSet::new();
    for t in timelines.iter().filter(|t| !t.is_degraded()) {
        mark(&t.orange, true);
        for g in t.green.iter().filter(|g| **g != t.fixed) {
            mark(g, false);
        }
        mark(&t.fixed, true);
        for g in &t.green {
            support.insert(g.clone());
            if let Some(p) = history.first_parent(g) {
                support.insert(p.to_string());
            }
        }
    }
    let mut entries: Vec<PlanEntry> = kinds
        .into_iter()
        .map(|(hash, full_analysis)| PlanEntry { hash, full_analysis })
        .collect();
    entries.sort_by(|a, b| (order(&a.hash), &a.hash).cmp(&(order(&b.hash), &b.hash)));
    let in_plan: HashSet<&str> = entries.iter().map(|e| e.hash.as_str()).collect();
    let mut support: Vec<String> = support
        .into_iter()
        .filter(|h| !in_plan.contains(h.as_str()))
        .collect();
    support.sort_by(|a, b| (order(a), a).cmp(&(order(b), b)));
    AnalysisPlan { entries, support }
}
