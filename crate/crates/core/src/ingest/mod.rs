//! Project snapshots: issues, commits and diffs captured once and then
//! analyzed offline.

mod assemble;
mod github;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::FileDiff;

pub use assemble::{snapshot_from_git, TrackerIssue};
pub use github::{fetch_remote, FetchError, FetchOptions, Sleeper};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixingCommit {
    pub hash: String,
    pub date: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub id: u64,
    pub state: IssueState,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub fixing_commits: Vec<FixingCommit>,
    /// Commit the tracker recorded as closing the issue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub hash: String,
    pub parents: Vec<String>,
    pub author_id: String,
    pub timestamp: DateTime<Utc>,
    pub message: String,
    #[serde(default)]
    pub file_diffs: Vec<FileDiff>,
}

#[derive(Default)]
struct CommitIndex(OnceLock<HashMap<String, usize>>);

impl Clone for CommitIndex {
    fn clone(&self) -> Self {
        Self::default()
    }
}

impl PartialEq for CommitIndex {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Debug for CommitIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CommitIndex")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSnapshot {
    pub version: u32,
    #[serde(rename = "repo")]
    pub repo_id: String,
    pub captured_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_branch: Option<String>,
    /// Tip of the default branch; inferred when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<String>,
    pub bug_labels: BTreeSet<String>,
    pub issues: Vec<IssueRecord>,
    pub commits: Vec<CommitRecord>,
    /// Hashes referenced by the snapshot whose commits were not captured.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub external_commits: BTreeSet<String>,
    #[serde(skip)]
    index: CommitIndex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    BadHash { hash: String },
    DuplicateCommit { hash: String },
    UnknownParent { commit: String, parent: String },
    DuplicateIssue { id: u64 },
    ZeroIssueId,
    ClosedAtMismatch { id: u64 },
    FixesOnOpenIssue { id: u64 },
    ClosedWithoutFixes { id: u64 },
    UnorderedFixes { id: u64 },
    UnknownFixingCommit { id: u64, hash: String },
    UnknownHead { hash: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadHash { hash } => write!(f, "commit hash `{hash}` is not 40 lowercase hex digits"),
            Violation::DuplicateCommit { hash } => write!(f, "commit {hash} appears more than once"),
            Violation::UnknownParent { commit, parent } => {
                write!(f, "commit {commit} has parent {parent} that is neither captured nor external")
            }
            Violation::DuplicateIssue { id } => write!(f, "issue #{id} appears more than once"),
            Violation::ZeroIssueId => write!(f, "issue id 0 is not allowed"),
            Violation::ClosedAtMismatch { id } => {
                write!(f, "issue #{id}: closed_at must be present exactly when the issue is closed")
            }
            Violation::FixesOnOpenIssue { id } => write!(f, "issue #{id} is open but lists fixing commits"),
            Violation::ClosedWithoutFixes { id } => write!(f, "issue #{id} is closed but has no fixing commits"),
            Violation::UnorderedFixes { id } => write!(f, "issue #{id}: fixing commit dates decrease"),
            Violation::UnknownFixingCommit { id, hash } => {
                write!(f, "issue #{id}: fixing commit {hash} is not in the snapshot")
            }
            Violation::UnknownHead { hash } => write!(f, "head {hash} is not a captured commit"),
        }
    }
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported snapshot version {found} (expected {SNAPSHOT_VERSION})")]
    Version { found: u32 },
    #[error("invalid snapshot:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Violation>),
}

pub fn is_commit_hash(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl ProjectSnapshot {
    pub fn new(
        repo_id: impl Into<String>,
        captured_at: DateTime<Utc>,
        bug_labels: BTreeSet<String>,
        issues: Vec<IssueRecord>,
        commits: Vec<CommitRecord>,
    ) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            repo_id: repo_id.into(),
            captured_at,
            default_branch: None,
            head: None,
            bug_labels,
            issues,
            commits,
            external_commits: BTreeSet::new(),
            index: CommitIndex::default(),
        }
    }

    fn index(&self) -> &HashMap<String, usize> {
        self.index.0.get_or_init(|| {
            self.commits
                .iter()
                .enumerate()
                .map(|(i, c)| (c.hash.clone(), i))
                .collect()
        })
    }

    pub fn commit(&self, hash: &str) -> Option<&CommitRecord> {
        self.index().get(hash).map(|&i| &self.commits[i])
    }

    pub fn issue(&self, id: u64) -> Option<&IssueRecord> {
        self.issues.iter().find(|i| i.id == id)
    }

    /// The branch tip: `head` if set, otherwise the latest commit that is
    /// nobody's parent.
    pub fn head_commit(&self) -> Option<&CommitRecord> {
        if let Some(h) = &self.head {
            return self.commit(h);
        }
        let parents: HashSet<&str> = self
            .commits
            .iter()
            .flat_map(|c| c.parents.iter().map(String::as_str))
            .collect();
        self.commits
            .iter()
            .enumerate()
            .filter(|(_, c)| !parents.contains(c.hash.as_str()))
            .max_by_key(|(i, c)| (c.timestamp, *i))
            .map(|(_, c)| c)
    }

    pub fn validate(&self) -> Result<(), SnapshotError> {
        if self.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version { found: self.version });
        }
        let mut v = Vec::new();
        let mut seen = HashSet::new();
        for c in &self.commits {
            if !is_commit_hash(&c.hash) {
                v.push(Violation::BadHash { hash: c.hash.clone() });
            }
            if !seen.insert(c.hash.as_str()) {
                v.push(Violation::DuplicateCommit { hash: c.hash.clone() });
            }
        }
        for c in &self.commits {
            for p in &c.parents {
                if !seen.contains(p.as_str()) && !self.external_commits.contains(p) {
                    v.push(Violation::UnknownParent {
                        commit: c.hash.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }
        let mut ids = HashSet::new();
        for issue in &self.issues {
            if issue.id == 0 {
                v.push(Violation::ZeroIssueId);
            }
            if !ids.insert(issue.id) {
                v.push(Violation::DuplicateIssue { id: issue.id });
            }
            let closed = issue.state == IssueState::Closed;
            if closed != issue.closed_at.is_some() {
                v.push(Violation::ClosedAtMismatch { id: issue.id });
            }
            if !closed && !issue.fixing_commits.is_empty() {
                v.push(Violation::FixesOnOpenIssue { id: issue.id });
            }
            if closed && issue.fixing_commits.is_empty() {
                v.push(Violation::ClosedWithoutFixes { id: issue.id });
            }
            if issue.fixing_commits.windows(2).any(|w| w[0].date > w[1].date) {
                v.push(Violation::UnorderedFixes { id: issue.id });
            }
            for f in &issue.fixing_commits {
                if !seen.contains(f.hash.as_str()) && !self.external_commits.contains(&f.hash) {
                    v.push(Violation::UnknownFixingCommit {
                        id: issue.id,
                        hash: f.hash.clone(),
                    });
                }
            }
        }
        if let Some(h) = &self.head {
            if !seen.contains(h.as_str()) {
                v.push(Violation::UnknownHead { hash: h.clone() });
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(SnapshotError::Invalid(v))
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, SnapshotError> {
        let snap: ProjectSnapshot = serde_json::from_str(text).map_err(|e| SnapshotError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        snap.validate()?;
        Ok(snap)
    }
}

pub fn load_snapshot(path: &Path) -> Result<ProjectSnapshot, SnapshotError> {
    let text = std::fs::read_to_string(path).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ProjectSnapshot::from_json(&text, path)
}

/// Validates and writes the snapshot; the file appears only once complete.
pub fn save_snapshot(snapshot: &ProjectSnapshot, path: &Path) -> Result<(), SnapshotError> {
    snapshot.validate()?;
    write_atomic(path, snapshot.to_json().as_bytes()).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Keeps issues that carry a bug label (compared case-insensitively) and
/// drops closed issues that no commit fixes. Open issues are kept.
pub fn filter_bug_issues(issues: &[IssueRecord], bug_labels: &BTreeSet<String>) -> Vec<IssueRecord> {
    let wanted: HashSet<String> = bug_labels.iter().map(|l| l.to_lowercase()).collect();
    issues
        .iter()
        .filter(|i| i.labels.iter().any(|l| wanted.contains(&l.to_lowercase())))
        .filter(|i| i.state == IssueState::Open || !i.fixing_commits.is_empty())
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(secs, 0).unwrap()
    }

    fn h(n: u8) -> String {
        format!("{n:040x}")
    }

    fn issue(id: u64, labels: &[&str], closed: bool, fixes: usize) -> IssueRecord {
        IssueRecord {
            id,
            state: if closed { IssueState::Closed } else { IssueState::Open },
            created_at: t(0),
            closed_at: closed.then(|| t(100)),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            fixing_commits: (0..fixes)
                .map(|i| FixingCommit {
                    hash: h(i as u8 + 1),
                    date: t(10 + i as i64),
                })
                .collect(),
            closed_by: None,
        }
    }

    fn commit(n: u8, parents: &[u8]) -> CommitRecord {
        CommitRecord {
            hash: h(n),
            parents: parents.iter().map(|&p| h(p)).collect(),
            author_id: "dev".into(),
            timestamp: t(i64::from(n)),
            message: format!("c{n}"),
            file_diffs: Vec::new(),
        }
    }

    fn labels(ls: &[&str]) -> BTreeSet<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn filter_examples() {
        let bug = labels(&["bug"]);
        assert!(filter_bug_issues(&[issue(1, &["enhancement"], true, 1)], &bug).is_empty());
        assert_eq!(filter_bug_issues(&[issue(2, &["bug"], true, 1)], &bug).len(), 1);
        let both = labels(&["bug", "defect"]);
        assert_eq!(filter_bug_issues(&[issue(3, &["defect"], false, 0)], &both).len(), 1);
        assert!(filter_bug_issues(&[issue(4, &["Bug"], true, 0)], &bug).is_empty());
        assert_eq!(filter_bug_issues(&[issue(5, &["BUG"], true, 1)], &bug).len(), 1);
    }

    #[test]
    fn validation_names_offenders() {
        let mut snap = ProjectSnapshot::new(
            "o/r",
            t(1000),
            labels(&["bug"]),
            vec![issue(7, &["bug"], true, 2)],
            vec![commit(1, &[])],
        );
        let err = snap.validate().unwrap_err().to_string();
        assert!(err.contains(&h(2)), "{err}");
        snap.commits.push(commit(2, &[1]));
        snap.validate().unwrap();
        snap.commits.push(commit(3, &[9]));
        let err = snap.validate().unwrap_err().to_string();
        assert!(err.contains(&h(9)), "{err}");
    }

    #[test]
    fn round_trip_and_atomic_save() {
        let snap = ProjectSnapshot::new(
            "o/r",
            t(1000),
            labels(&["bug"]),
            vec![issue(7, &["bug"], true, 1), issue(8, &["bug"], false, 0)],
            vec![commit(1, &[])],
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s/snapshot.json");
        save_snapshot(&snap, &path).unwrap();
        let back = load_snapshot(&path).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.head_commit().unwrap().hash, h(1));
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ProjectSnapshot::from_json("{\n  \"version\": 1,\n  \"repo\": 5\n}", Path::new("x.json"))
            .unwrap_err();
        match err {
            SnapshotError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }
}
