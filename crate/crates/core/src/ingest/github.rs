//! Snapshot download through the GitHub REST v3 API.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use super::assemble::{assemble, Assembly, TrackerIssue};
use super::{save_snapshot, CommitRecord, IssueState, ProjectSnapshot, SnapshotError};
use crate::diff::{parse_hunks, DiffError, FileDiff, DEV_NULL};
use crate::linker::RefMode;

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

#[derive(Clone)]
pub struct FetchOptions {
    pub api_base: String,
    pub bug_labels: BTreeSet<String>,
    /// Defaults to the repository's default branch.
    pub branch: Option<String>,
    pub ref_mode: RefMode,
    /// Attempts after a rate-limited response before giving up.
    pub max_retries: u32,
    /// Upper bound on a single rate-limit pause.
    pub max_wait: Duration,
    pub sleeper: Sleeper,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            api_base: "https://api.github.com".to_string(),
            bug_labels: BTreeSet::from(["bug".to_string()]),
            branch: None,
            ref_mode: RefMode::Any,
            max_retries: 5,
            max_wait: Duration::from_secs(3600),
            sleeper: Arc::new(std::thread::sleep),
        }
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limit still exhausted after {0} retries")]
    RateLimited(u32),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("HTTP {status} from {url}")]
    Http { status: u16, url: String },
    #[error("request to {url} failed: {message}")]
    Transport { url: String, message: String },
    #[error("unexpected response from {url}: {message}")]
    Decode { url: String, message: String },
    #[error("patch of {file} in {sha}: {source}")]
    Patch {
        sha: String,
        file: String,
        source: DiffError,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Deserialize)]
struct RepoResp {
    default_branch: String,
}

#[derive(Deserialize)]
struct LabelResp {
    name: String,
}

#[derive(Deserialize)]
struct IssueResp {
    number: u64,
    state: String,
    created_at: DateTime<Utc>,
    closed_at: Option<DateTime<Utc>>,
    #[serde(default)]
    labels: Vec<LabelResp>,
    pull_request: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct ShaResp {
    sha: String,
}

#[derive(Deserialize)]
struct SignatureResp {
    email: Option<String>,
    date: DateTime<Utc>,
}

#[derive(Deserialize)]
struct CommitInner {
    message: String,
    author: Option<SignatureResp>,
    committer: Option<SignatureResp>,
}

#[derive(Deserialize)]
struct UserResp {
    login: String,
}

#[derive(Deserialize)]
struct CommitResp {
    sha: String,
    #[serde(default)]
    parents: Vec<ShaResp>,
    commit: CommitInner,
    author: Option<UserResp>,
}

#[derive(Deserialize)]
struct FileResp {
    filename: String,
    previous_filename: Option<String>,
    status: String,
    patch: Option<String>,
}

#[derive(Deserialize)]
struct CommitDetailResp {
    #[serde(default)]
    files: Vec<FileResp>,
}

#[derive(Deserialize)]
struct EventResp {
    event: String,
    commit_id: Option<String>,
}

struct Client<'a> {
    agent: ureq::Agent,
    token: Option<&'a str>,
    opts: &'a FetchOptions,
}

fn next_link(header: Option<&str>) -> Option<String> {
    header?.split(',').find_map(|part| {
        let (url, rel) = part.split_once(';')?;
        rel.contains("rel=\"next\"")
            .then(|| url.trim().trim_start_matches('<').trim_end_matches('>').to_string())
    })
}

impl<'a> Client<'a> {
    fn new(token: Option<&'a str>, opts: &'a FetchOptions) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .user_agent("fixstate")
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        Self {
            agent: config.into(),
            token,
            opts,
        }
    }

    /// One page: body and the URL of the next page.
    fn get_page(&self, url: &str) -> Result<(String, Option<String>), FetchError> {
        let mut retries = 0;
        loop {
            let mut req = self
                .agent
                .get(url)
                .header("Accept", "application/vnd.github+json")
                .header("X-GitHub-Api-Version", "2022-11-28");
            if let Some(t) = self.token {
                req = req.header("Authorization", &format!("Bearer {t}"));
            }
            let mut resp = req.call().map_err(|e| FetchError::Transport {
                url: url.to_string(),
                message: e.to_string(),
            })?;
            let status = resp.status().as_u16();
            let header = |name: &str| {
                resp.headers()
                    .get(name)
                    .and_then(|v| v.to_str().ok())
                    .map(str::to_string)
            };
            let remaining = header("x-ratelimit-remaining");
            let retry_after = header("retry-after");
            let reset = header("x-ratelimit-reset");
            let link = header("link");
            let limited = status == 429
                || (status == 403 && (remaining.as_deref() == Some("0") || retry_after.is_some()));
            match status {
                200..=299 => {
                    let body = resp.body_mut().read_to_string().map_err(|e| FetchError::Transport {
                        url: url.to_string(),
                        message: e.to_string(),
                    })?;
                    return Ok((body, next_link(link.as_deref())));
                }
                401 => return Err(FetchError::Auth(format!("{url} rejected the token"))),
                _ if limited => {
                    if retries >= self.opts.max_retries {
                        return Err(FetchError::RateLimited(retries));
                    }
                    retries += 1;
                    let wait = self.wait_time(retry_after.as_deref(), reset.as_deref());
                    warn!("rate limited on {url}; pausing {}s (retry {retries})", wait.as_secs());
                    (self.opts.sleeper)(wait);
                }
                403 => return Err(FetchError::Auth(format!("{url} is forbidden for this token"))),
                404 => return Err(FetchError::NotFound(url.to_string())),
                _ => {
                    return Err(FetchError::Http {
                        status,
                        url: url.to_string(),
                    })
                }
            }
        }
    }

    fn wait_time(&self, retry_after: Option<&str>, reset: Option<&str>) -> Duration {
        let secs = retry_after
            .and_then(|s| s.trim().parse::<u64>().ok())
            .or_else(|| {
                let reset: i64 = reset?.trim().parse().ok()?;
                Some((reset - Utc::now().timestamp()).max(0) as u64)
            })
            .unwrap_or(60)
            .max(1);
        Duration::from_secs(secs).min(self.opts.max_wait)
    }

    fn get<T: DeserializeOwned>(&self, url: &str) -> Result<T, FetchError> {
        let (body, _) = self.get_page(url)?;
        decode(url, &body)
    }

    fn get_all<T: DeserializeOwned>(&self, url: &str) -> Result<Vec<T>, FetchError> {
        let mut out = Vec::new();
        let mut next = Some(url.to_string());
        while let Some(url) = next {
            let (body, link) = self.get_page(&url)?;
            out.extend(decode::<Vec<T>>(&url, &body)?);
            next = link;
        }
        Ok(out)
    }
}

fn decode<T: DeserializeOwned>(url: &str, body: &str) -> Result<T, FetchError> {
    serde_json::from_str(body).map_err(|e| FetchError::Decode {
        url: url.to_string(),
        message: e.to_string(),
    })
}

fn repo_lock(repo_id: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    map.entry(repo_id.to_string()).or_default().clone()
}

/// Downloads issues, commits and fixing diffs of `repo_id` (`owner/name`)
/// and writes the snapshot to `out`. Fetches for the same repository run
/// one at a time. On any error no file is written.
pub fn fetch_remote(
    repo_id: &str,
    token: Option<&str>,
    out: &Path,
    opts: &FetchOptions,
) -> Result<ProjectSnapshot, FetchError> {
    let lock = repo_lock(repo_id);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    let client = Client::new(token, opts);
    let base = format!("{}/repos/{repo_id}", opts.api_base.trim_end_matches('/'));

    let repo: RepoResp = client.get(&base)?;
    let branch = opts.branch.clone().unwrap_or(repo.default_branch);
    info!("fetching {repo_id} at {branch}");

    let wanted: BTreeSet<String> = opts.bug_labels.iter().map(|l| l.to_lowercase()).collect();
    let mut issues = Vec::new();
    for i in client.get_all::<IssueResp>(&format!("{base}/issues?state=all&per_page=100"))? {
        if i.pull_request.is_some() {
            continue;
        }
        let labels: BTreeSet<String> = i.labels.into_iter().map(|l| l.name).collect();
        if !labels.iter().any(|l| wanted.contains(&l.to_lowercase())) {
            continue;
        }
        let state = if i.state == "closed" {
            IssueState::Closed
        } else {
            IssueState::Open
        };
        let closed_by = if state == IssueState::Closed {
            client
                .get_all::<EventResp>(&format!("{base}/issues/{}/events?per_page=100", i.number))?
                .into_iter()
                .filter(|e| e.event == "closed")
                .filter_map(|e| e.commit_id)
                .last()
        } else {
            None
        };
        issues.push(TrackerIssue {
            id: i.number,
            state,
            created_at: i.created_at,
            closed_at: if state == IssueState::Closed { i.closed_at } else { None },
            labels,
            closed_by,
        });
    }

    let listed = client.get_all::<CommitResp>(&format!("{base}/commits?sha={branch}&per_page=100"))?;
    let head = listed.first().map(|c| c.sha.clone());
    let commits: Vec<CommitRecord> = listed
        .into_iter()
        .rev()
        .map(|c| {
            let sig = c.commit.author.or(c.commit.committer);
            CommitRecord {
                hash: c.sha,
                parents: c.parents.into_iter().map(|p| p.sha).collect(),
                author_id: c
                    .author
                    .map(|u| u.login)
                    .or_else(|| sig.as_ref().and_then(|s| s.email.clone()))
                    .unwrap_or_default(),
                timestamp: sig.map(|s| s.date).unwrap_or_default(),
                message: c.commit.message,
                file_diffs: Vec::new(),
            }
        })
        .collect();

    let snapshot = assemble(
        Assembly {
            repo_id,
            captured_at: Utc::now(),
            branch: Some(branch),
            head,
            bug_labels: &opts.bug_labels,
            mode: opts.ref_mode,
        },
        commits,
        &issues,
        |c| {
            let detail: CommitDetailResp = client.get(&format!("{base}/commits/{}", c.hash))?;
            detail.files.into_iter().map(|f| file_diff(&c.hash, f)).collect()
        },
    )?;
    save_snapshot(&snapshot, out)?;
    Ok(snapshot)
}

fn file_diff(sha: &str, f: FileResp) -> Result<FileDiff, FetchError> {
    let old = match f.status.as_str() {
        "added" => DEV_NULL.to_string(),
        _ => f.previous_filename.clone().unwrap_or_else(|| f.filename.clone()),
    };
    let new = match f.status.as_str() {
        "removed" => DEV_NULL.to_string(),
        _ => f.filename.clone(),
    };
    match &f.patch {
        Some(patch) => parse_hunks(&old, &new, patch).map_err(|source| FetchError::Patch {
            sha: sha.to_string(),
            file: f.filename.clone(),
            source,
        }),
        None => Ok(FileDiff {
            old_path: old,
            new_path: new,
            hunks: Vec::new(),
            binary: f.status != "renamed",
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_header() {
        let h = r#"<https://x/issues?page=2>; rel="next", <https://x/issues?page=9>; rel="last""#;
        assert_eq!(next_link(Some(h)).as_deref(), Some("https://x/issues?page=2"));
        assert_eq!(next_link(Some(r#"<https://x?page=1>; rel="prev""#)), None);
        assert_eq!(next_link(None), None);
    }
}
