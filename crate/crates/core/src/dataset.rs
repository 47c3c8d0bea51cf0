//! Dataset entries: element states right before and right after each fix,
//! labeled with the number of open bugs touching the element.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::CommitAnalysis;
use crate::diff::{elements_touched, modified_ranges, FileDiff, LineTag, Side};
use crate::ingest::ProjectSnapshot;
use crate::java::{tokenize, ElementKind, PathFilter};
use crate::linker::{BugFixTimeline, HistoryIndex};
use crate::metrics::{columns, MetricsVector};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("issue #{issue}: no analysis for commit {commit}")]
    MissingAnalysis { issue: u64, commit: String },
    #[error("issue #{issue}: no full analysis for commit {commit}")]
    MissingMetrics { issue: u64, commit: String },
    #[error("issue #{issue}: commit {commit} is not in the snapshot")]
    MissingCommit { issue: u64, commit: String },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueTouchSet {
    pub issue_id: u64,
    pub fqns_by_level: BTreeMap<ElementKind, BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl IssueTouchSet {
    pub fn contains(&self, level: ElementKind, fqn: &str) -> bool {
        self.fqns_by_level.get(&level).is_some_and(|s| s.contains(fqn))
    }

    pub fn is_empty(&self) -> bool {
        self.fqns_by_level.values().all(BTreeSet::is_empty)
    }

    fn insert(&mut self, level: ElementKind, fqn: String) {
        self.fqns_by_level.entry(level).or_default().insert(fqn);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TouchOptions {
    /// Skip file changes whose changed lines hold only comments or blanks.
    pub ignore_comment_only: bool,
}

fn comment_only(diff: &FileDiff) -> bool {
    let changed: Vec<&str> = diff
        .hunks
        .iter()
        .flat_map(|h| h.lines.iter())
        .filter(|l| l.tag != LineTag::Context)
        .map(|l| l.text.as_str())
        .collect();
    if changed.is_empty() {
        return false;
    }
    let text = changed.join("\n");
    let ts = tokenize(&text);
    let mut in_comment_body = true;
    for line in &changed {
        let t = line.trim_start();
        // Continuation lines of block comments.
        if !(t.is_empty() || t.starts_with('*') || t.starts_with("//") || t.starts_with("/*")) {
            in_comment_body = false;
        }
    }
    in_comment_body || ts.tokens().iter().all(|t| t.kind.is_trivia())
}

fn touched_on_side(
    diff: &FileDiff,
    side: Side,
    analysis: &CommitAnalysis,
    out: &mut IssueTouchSet,
) {
    let Some(path) = diff.path(side) else {
        return;
    };
    let Some(file) = analysis.file(path) else {
        return;
    };
    let ranges = modified_ranges(diff, side);
    if ranges.is_empty() {
        return;
    }
    let touched = elements_touched(&ranges, &file.elements);
    for e in &file.elements {
        if touched.contains(&e.fqn) {
            out.insert(e.kind, e.fqn.clone());
            if let Some(p) = &e.parent_fqn {
                out.insert(ElementKind::Class, p.clone());
            }
            out.insert(ElementKind::File, e.path.clone());
        }
    }
}

/// Elements changed by any fixing commit of the issue, on the old side of
/// each diff (parent state) and on the new side (commit state).
pub fn accumulate_issue_touches(
    timeline: &BugFixTimeline,
    snapshot: &ProjectSnapshot,
    analyses: &HashMap<String, CommitAnalysis>,
    filter: &PathFilter,
    opts: TouchOptions,
) -> Result<IssueTouchSet, DatasetError> {
    let mut set = IssueTouchSet {
        issue_id: timeline.issue_id,
        ..Default::default()
    };
    let need = |hash: &str| {
        analyses.get(hash).ok_or_else(|| DatasetError::MissingAnalysis {
            issue: timeline.issue_id,
            commit: hash.to_string(),
        })
    };
    for g in &timeline.green {
        let commit = snapshot.commit(g).ok_or_else(|| DatasetError::MissingCommit {
            issue: timeline.issue_id,
            commit: g.clone(),
        })?;
        let java: Vec<&FileDiff> = commit
            .file_diffs
            .iter()
            .filter(|d| [Side::Old, Side::New].iter().any(|&s| d.path(s).is_some_and(|p| filter.accepts(p))))
            .filter(|d| !(opts.ignore_comment_only && comment_only(d)))
            .collect();
        if java.is_empty() {
            continue;
        }
        let after = need(g)?;
        let parent = commit.parents.first();
        let before = match parent {
            Some(p) => Some(need(p)?),
            None => None,
        };
        for d in java {
            if d.is_rename() {
                set.notes.push(format!(
                    "{} renamed {} to {}",
                    &g[..g.len().min(10)],
                    d.old_path,
                    d.new_path
                ));
            }
            if let Some(b) = before {
                touched_on_side(d, Side::Old, b, &mut set);
            }
            touched_on_side(d, Side::New, after, &mut set);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub commit_hash: String,
    pub fqn: String,
    pub level: ElementKind,
    pub parent_fqn: Option<String>,
    pub metrics: MetricsVector,
    pub bug_count: u32,
}

impl DatasetEntry {
    pub fn is_buggy(&self) -> bool {
        self.bug_count > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRecord {
    pub issue_id: u64,
    pub commit: String,
    pub level: ElementKind,
    pub fqn: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub entries: BTreeMap<ElementKind, Vec<DatasetEntry>>,
    pub drops: Vec<DropRecord>,
}

impl Dataset {
    pub fn level(&self, level: ElementKind) -> &[DatasetEntry] {
        self.entries.get(&level).map_or(&[], Vec::as_slice)
    }
}

/// One buggy entry at each orange commit and one fixed entry at each fixed
/// state for every touched element. `bug_count` of an entry counts the
/// issues whose buggy interval covers the entry's commit and whose touch
/// set holds the element.
pub fn build_entries(
    touch_sets: &[IssueTouchSet],
    timelines: &[BugFixTimeline],
    history: &HistoryIndex,
    analyses: &HashMap<String, CommitAnalysis>,
) -> Result<Dataset, DatasetError> {
    let by_issue: HashMap<u64, &IssueTouchSet> = touch_sets.iter().map(|t| (t.issue_id, t)).collect();
    let live: Vec<(&BugFixTimeline, &IssueTouchSet)> = timelines
        .iter()
        .filter(|t| !t.is_degraded())
        .filter_map(|t| by_issue.get(&t.issue_id).map(|s| (t, *s)))
        .filter(|(_, s)| !s.is_empty())
        .collect();

    // (position, hash, level, fqn) -> parent
    let mut keys: BTreeMap<(usize, String, ElementKind, String), Option<String>> = BTreeMap::new();
    let mut drops = Vec::new();
    for &(t, set) in &live {
        for (state, hash) in [("buggy", &t.orange), ("fixed", &t.fixed)] {
            let a = analyses.get(hash).ok_or_else(|| DatasetError::MissingAnalysis {
                issue: t.issue_id,
                commit: hash.clone(),
            })?;
            if !a.full {
                return Err(DatasetError::MissingMetrics {
                    issue: t.issue_id,
                    commit: hash.clone(),
                });
            }
            let pos = history.position(hash).unwrap_or(usize::MAX);
            for (&level, fqns) in &set.fqns_by_level {
                for fqn in fqns {
                    match a.element(level, fqn) {
                        Some(e) => {
                            keys.insert((pos, hash.clone(), level, fqn.clone()), e.parent_fqn.clone());
                        }
                        None => {
                            let reason = if state == "fixed" {
                                "vanished in fixed state"
                            } else {
                                "created by the fix"
                            };
                            // Elements added by the fix only get a fixed entry.
                            if state == "fixed" {
                                drops.push(DropRecord {
                                    issue_id: t.issue_id,
                                    commit: hash.clone(),
                                    level,
                                    fqn: fqn.clone(),
                                    reason: reason.to_string(),
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let mut dataset = Dataset {
        entries: ElementKind::ALL.iter().map(|&k| (k, Vec::new())).collect(),
        drops,
    };
    for ((pos, hash, level, fqn), parent) in keys {
        let a = &analyses[&hash];
        let metrics = a
            .metrics(level, &fqn)
            .cloned()
            .expect("full analysis has metrics for its elements");
        let bug_count = live
            .iter()
            .filter(|(t, s)| t.covers(pos) && s.contains(level, &fqn))
            .count() as u32;
        dataset.entries.get_mut(&level).expect("all levels present").push(DatasetEntry {
            commit_hash: hash,
            fqn,
            level,
            parent_fqn: parent,
            metrics,
            bug_count,
        });
    }
    dataset.drops.sort_by(|a, b| {
        (a.issue_id, &a.commit, a.level, &a.fqn).cmp(&(b.issue_id, &b.commit, b.level, &b.fqn))
    });
    Ok(dataset)
}

pub fn csv_file_name(level: ElementKind, with_parent: bool) -> String {
    if with_parent {
        format!("{level}-p.csv")
    } else {
        format!("{level}.csv")
    }
}

fn header(level: ElementKind, with_parent: bool) -> Vec<String> {
    let mut h = vec!["hash".to_string(), "fqn".to_string()];
    if with_parent {
        h.push("parent".to_string());
    }
    h.extend(columns(level).iter().map(|c| c.to_string()));
    h.push("bug_count".to_string());
    h
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn format_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes one CSV of a level. Rows keep the order of `entries`.
pub fn export_csv(
    entries: &[DatasetEntry],
    level: ElementKind,
    with_parent: bool,
    path: &Path,
) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header(level, with_parent)).map_err(|e| csv_err(path, e))?;
    for e in entries {
        let mut row = vec![e.commit_hash.clone(), e.fqn.clone()];
        if with_parent {
            row.push(e.parent_fqn.clone().unwrap_or_default());
        }
        row.extend(e.metrics.values.iter().map(|v| format_value(*v)));
        row.push(e.bug_count.to_string());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(path, e))?;
    crate::ingest::write_atomic(path, &bytes).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `file.csv`, `class.csv`, `method.csv` and `method-p.csv`.
pub fn export_dataset(dataset: &Dataset, dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut written = Vec::new();
    for level in ElementKind::ALL {
        let p = dir.join(csv_file_name(level, false));
        export_csv(dataset.level(level), level, false, &p)?;
        written.push(p);
    }
    let p = dir.join(csv_file_name(ElementKind::Method, true));
    export_csv(dataset.level(ElementKind::Method), ElementKind::Method, true, &p)?;
    written.push(p);
    Ok(written)
}

pub fn export_drop_log(drops: &[DropRecord], path: &Path) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["issue", "hash", "level", "fqn", "reason"])
        .map_err(|e| csv_err(path, e))?;
    for d in drops {
        w.write_record([
            d.issue_id.to_string(),
            d.commit.clone(),
            d.level.to_string(),
            d.fqn.clone(),
            d.reason.clone(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(path, e))?;
    crate::ingest::write_atomic(path, &bytes).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a CSV written by [`export_csv`]; the parent column is detected
/// from the header.
pub fn read_csv(path: &Path, level: ElementKind) -> Result<Vec<DatasetEntry>, DatasetError> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let head: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let with_parent = head.get(2).map(String::as_str) == Some("parent");
    if head != header(level, with_parent) {
        return Err(csv_err(path, format!("header does not match the {level} layout")));
    }
    let first_metric = if with_parent { 3 } else { 2 };
    let ncols = columns(level).len();
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| csv_err(path, format!("row {}: {what}", n + 2));
        let mut values = Vec::with_capacity(ncols);
        for i in 0..ncols {
            let s = &rec[first_metric + i];
            values.push(if s.is_empty() {
                None
            } else {
                Some(s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")))?)
            });
        }
        let bug_count = rec[first_metric + ncols]
            .parse::<u32>()
            .map_err(|_| bad("bad bug_count"))?;
        out.push(DatasetEntry {
            commit_hash: rec[0].to_string(),
            fqn: rec[1].to_string(),
            level,
            parent_fqn: (with_parent && !rec[2].is_empty()).then(|| rec[2].to_string()),
            metrics: MetricsVector { level, values },
            bug_count,
        });
    }
    Ok(out)
}

/// Concatenates per-project dataset directories into `out`, one CSV per
/// level, rows in input order.
pub fn combine(inputs: &[PathBuf], out: &Path) -> Result<(), DatasetError> {
    let layouts = ElementKind::ALL
        .iter()
        .map(|&l| (l, false))
        .chain(std::iter::once((ElementKind::Method, true)));
    for (level, with_parent) in layouts {
        let name = csv_file_name(level, with_parent);
        let mut all = Vec::new();
        for dir in inputs {
            let p = dir.join(&name);
            if p.exists() {
                all.extend(read_csv(&p, level)?);
            }
        }
        export_csv(&all, level, with_parent, &out.join(&name))?;
    }
    Ok(())
}
