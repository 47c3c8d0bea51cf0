use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{CommitRecord, FixingCommit, IssueRecord, IssueState, ProjectSnapshot};
use crate::diff::FileDiff;
use crate::git::{GitError, GitRepo};
use crate::linker::{extract_issue_refs, RefMode};

/// An issue as the tracker reports it, before linking to commits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerIssue {
    pub id: u64,
    pub state: IssueState,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub closed_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub closed_by: Option<String>,
}

pub(crate) struct Assembly<'a> {
    pub repo_id: &'a str,
    pub captured_at: DateTime<Utc>,
    pub branch: Option<String>,
    pub head: Option<String>,
    pub bug_labels: &'a BTreeSet<String>,
    pub mode: RefMode,
}

/// Links tracker issues to commits and attaches diffs to fixing commits.
///
/// A closed bug is fixed by every commit whose message references it plus
/// the tracker's closing commit. Closed bugs nothing fixes are dropped.
pub(crate) fn assemble<E>(
    a: Assembly<'_>,
    mut commits: Vec<CommitRecord>,
    issues: &[TrackerIssue],
    mut diff_for: impl FnMut(&CommitRecord) -> Result<Vec<FileDiff>, E>,
) -> Result<ProjectSnapshot, E> {
    let wanted: HashSet<String> = a.bug_labels.iter().map(|l| l.to_lowercase()).collect();
    let position: HashMap<String, usize> = commits
        .iter()
        .enumerate()
        .map(|(i, c)| (c.hash.clone(), i))
        .collect();
    let mut refs: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, c) in commits.iter().enumerate() {
        for r in extract_issue_refs(&c.message, a.mode) {
            if !r.cross_repo {
                refs.entry(r.id).or_default().push(i);
            }
        }
    }

    let mut external: BTreeSet<String> = BTreeSet::new();
    let mut records = Vec::new();
    for issue in issues {
        if !issue.labels.iter().any(|l| wanted.contains(&l.to_lowercase())) {
            continue;
        }
        let mut fixing: Vec<(DateTime<Utc>, usize, String)> = Vec::new();
        if issue.state == IssueState::Closed {
            for &i in refs.get(&issue.id).into_iter().flatten() {
                fixing.push((commits[i].timestamp, i, commits[i].hash.clone()));
            }
            if let Some(h) = &issue.closed_by {
                match position.get(h) {
                    Some(&i) => fixing.push((commits[i].timestamp, i, h.clone())),
                    None => {
                        external.insert(h.clone());
                        let date = issue.closed_at.unwrap_or(issue.created_at);
                        fixing.push((date, usize::MAX, h.clone()));
                    }
                }
            }
            fixing.sort();
            fixing.dedup_by(|x, y| x.2 == y.2);
            if fixing.is_empty() {
                continue;
            }
        }
        records.push(IssueRecord {
            id: issue.id,
            state: issue.state,
            created_at: issue.created_at,
            closed_at: if issue.state == IssueState::Closed {
                issue.closed_at.or(Some(issue.created_at))
            } else {
                None
            },
            labels: issue.labels.clone(),
            fixing_commits: fixing
                .into_iter()
                .map(|(date, _, hash)| FixingCommit { hash, date })
                .collect(),
            closed_by: issue.closed_by.clone(),
        });
    }
    records.sort_by_key(|r| r.id);

    let need_diffs: HashSet<String> = records
        .iter()
        .flat_map(|r| r.fixing_commits.iter().map(|f| f.hash.clone()))
        .collect();
    for c in commits.iter_mut() {
        if need_diffs.contains(&c.hash) {
            c.file_diffs = diff_for(c)?;
        }
    }
    for c in &commits {
        for p in &c.parents {
            if !position.contains_key(p) {
                external.insert(p.clone());
            }
        }
    }

    let mut snap = ProjectSnapshot::new(
        a.repo_id,
        a.captured_at,
        a.bug_labels.clone(),
        records,
        commits,
    );
    snap.default_branch = a.branch;
    snap.head = a.head;
    snap.external_commits = external;
    Ok(snap)
}

/// Builds a snapshot from a local clone and tracker issues supplied by the
/// caller. `captured_at` is the latest timestamp in the inputs, so the same
/// inputs always give the same snapshot.
pub fn snapshot_from_git(
    repo: &GitRepo,
    repo_id: &str,
    issues: &[TrackerIssue],
    bug_labels: &BTreeSet<String>,
    branch: Option<&str>,
    mode: RefMode,
) -> Result<ProjectSnapshot, GitError> {
    let branch = branch
        .map(str::to_string)
        .or_else(|| repo.current_branch())
        .unwrap_or_else(|| "HEAD".to_string());
    let head = repo.resolve(&branch)?;
    let commits: Vec<CommitRecord> = repo
        .log(&head)?
        .into_iter()
        .map(|c| CommitRecord {
            hash: c.hash,
            parents: c.parents,
            author_id: c.author,
            timestamp: c.timestamp,
            message: c.message,
            file_diffs: Vec::new(),
        })
        .collect();
    let captured_at = commits
        .iter()
        .map(|c| c.timestamp)
        .chain(issues.iter().flat_map(|i| std::iter::once(i.created_at).chain(i.closed_at)))
        .max()
        .unwrap_or_default();
    assemble(
        Assembly {
            repo_id,
            captured_at,
            branch: Some(branch),
            head: Some(head),
            bug_labels,
            mode,
        },
        commits,
        issues,
        |c| repo.commit_diff(&c.hash, c.parents.first().map(String::as_str)),
    )
}
