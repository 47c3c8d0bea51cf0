//! Read-only access to a local Git repository through the `git` command
//! line client. Nothing here touches the working copy or the index.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;

use chrono::{DateTime, TimeZone, Utc};
use thiserror::Error;

use crate::diff::{parse_unified_diff, DiffError, FileDiff};
use crate::java::PathFilter;

#[derive(Debug, Error)]
pub enum GitError {
    #[error("failed to run git: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("git {args} failed: {stderr}")]
    Command { args: String, stderr: String },
    #[error("{0} is not a git repository")]
    NotARepository(PathBuf),
    #[error("commit {0} never existed in this repository")]
    NeverExisted(String),
    #[error("commit {0} exists but is unreachable from any ref")]
    Unreachable(String),
    #[error("unexpected git output: {0}")]
    Output(String),
    #[error("diff of {hash}: {source}")]
    Diff { hash: String, source: DiffError },
}

/// A commit as read from `git log`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCommit {
    pub hash: String,
    pub parents: Vec<String>,
    pub author: String,
    pub timestamp: DateTime<Utc>,
    pub message: String,
}

/// Files of one commit, path to content.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileTree {
    pub files: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug)]
pub struct GitRepo {
    dir: PathBuf,
    reachable: OnceLock<HashSet<String>>,
}

impl GitRepo {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GitError> {
        let dir = dir.as_ref().to_path_buf();
        let repo = Self {
            dir: dir.clone(),
            reachable: OnceLock::new(),
        };
        match repo.run(&["rev-parse", "--git-dir"]) {
            Ok(_) => Ok(repo),
            Err(GitError::Command { .. }) => Err(GitError::NotARepository(dir)),
            Err(e) => Err(e),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.dir)
            .args(["-c", "core.quotepath=off", "-c", "diff.noprefix=false"])
            .env("GIT_TERMINAL_PROMPT", "0")
            .env("LC_ALL", "C");
        cmd
    }

    fn run(&self, args: &[&str]) -> Result<Vec<u8>, GitError> {
        let out = self.command().args(args).stdin(Stdio::null()).output()?;
        if !out.status.success() {
            return Err(GitError::Command {
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    fn run_text(&self, args: &[&str]) -> Result<String, GitError> {
        let bytes = self.run(args)?;
        String::from_utf8(bytes).map_err(|e| GitError::Output(e.to_string()))
    }

    /// Full hash of a revision expression.
    pub fn resolve(&self, rev: &str) -> Result<String, GitError> {
        let spec = format!("{rev}^{{commit}}");
        Ok(self
            .run_text(&["rev-parse", "--verify", "--quiet", &spec])
            .map_err(|_| GitError::NeverExisted(rev.to_string()))?
            .trim()
            .to_string())
    }

    /// Name of the branch HEAD points at, if any.
    pub fn current_branch(&self) -> Option<String> {
        self.run_text(&["symbolic-ref", "--short", "-q", "HEAD"])
            .ok()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
    }

    /// All commits reachable from `rev`, parents before children.
    pub fn log(&self, rev: &str) -> Result<Vec<RawCommit>, GitError> {
        let text = self.run_text(&[
            "log",
            "--topo-order",
            "--reverse",
            "--format=%H%x00%P%x00%ae%x00%at%x00%B%x1e",
            rev,
        ])?;
        let mut commits = Vec::new();
        for record in text.split('\x1e') {
            let record = record.trim_start_matches('\n');
            if record.is_empty() {
                continue;
            }
            let mut parts = record.splitn(5, '\0');
            let mut next = || {
                parts
                    .next()
                    .ok_or_else(|| GitError::Output(format!("short log record: {record:?}")))
            };
            let hash = next()?.to_string();
            let parents = next()?.split_whitespace().map(str::to_string).collect();
            let author = next()?.to_string();
            let secs: i64 = next()?
                .parse()
                .map_err(|_| GitError::Output(format!("bad timestamp for {hash}")))?;
            let message = next()?.trim_end_matches('\n').to_string();
            let timestamp = Utc
                .timestamp_opt(secs, 0)
                .single()
                .ok_or_else(|| GitError::Output(format!("bad timestamp for {hash}")))?;
            commits.push(RawCommit {
                hash,
                parents,
                author,
                timestamp,
                message,
            });
        }
        Ok(commits)
    }

    /// Diff output decoded like file contents: invalid UTF-8 becomes U+FFFD
    /// so line numbering still matches the analysed source.
    fn run_lossy(&self, args: &[&str]) -> Result<String, GitError> {
        Ok(String::from_utf8_lossy(&self.run(args)?).into_owned())
    }

    /// Changes of a commit against its first parent (or the empty tree).
    pub fn commit_diff(&self, hash: &str, parent: Option<&str>) -> Result<Vec<FileDiff>, GitError> {
        let text = match parent {
            Some(p) => self.run_lossy(&["diff", "--no-color", "--no-ext-diff", "--no-textconv", "-M", p, hash])?,
            None => self.run_lossy(&[
                "diff-tree",
                "-p",
                "--root",
                "--no-color",
                "--no-ext-diff",
                "--no-textconv",
                "-M",
                "--no-commit-id",
                hash,
            ])?,
        };
        parse_unified_diff(&text).map_err(|source| GitError::Diff {
            hash: hash.to_string(),
            source,
        })
    }

    /// Raw `git diff` text between two commits.
    pub fn diff_text(&self, from: &str, to: &str) -> Result<String, GitError> {
        self.run_lossy(&["diff", "--no-color", "--no-ext-diff", "--no-textconv", "-M", from, to])
    }

    fn reachable(&self) -> Result<&HashSet<String>, GitError> {
        if let Some(set) = self.reachable.get() {
            return Ok(set);
        }
        let text = self.run_text(&["rev-list", "--all"])?;
        let mut set: HashSet<String> = text.lines().map(str::to_string).collect();
        if let Ok(head) = self.resolve("HEAD") {
            for line in self.run_text(&["rev-list", &head])?.lines() {
                set.insert(line.to_string());
            }
        }
        Ok(self.reachable.get_or_init(|| set))
    }

    /// Checks that `hash` names a commit reachable from some ref.
    pub fn verify_commit(&self, hash: &str) -> Result<String, GitError> {
        let full = self.resolve(hash)?;
        if !self.reachable()?.contains(&full) {
            return Err(GitError::Unreachable(hash.to_string()));
        }
        Ok(full)
    }

    /// The file tree of a commit, restricted to paths the filter accepts.
    pub fn checkout(&self, hash: &str, filter: Option<&PathFilter>) -> Result<FileTree, GitError> {
        let full = self.verify_commit(hash)?;
        let listing = self.run(&["ls-tree", "-r", "-z", "--full-tree", &full])?;
        let mut wanted: Vec<(String, String)> = Vec::new();
        for entry in listing.split(|&b| b == 0) {
            if entry.is_empty() {
                continue;
            }
            let entry = String::from_utf8_lossy(entry);
            let (meta, path) = entry
                .split_once('\t')
                .ok_or_else(|| GitError::Output(format!("ls-tree entry {entry:?}")))?;
            let mut meta = meta.split_whitespace();
            let (_mode, kind, oid) = (meta.next(), meta.next(), meta.next());
            if kind != Some("blob") {
                continue;
            }
            if filter.is_some_and(|f| !f.accepts(path)) {
                continue;
            }
            let oid = oid.ok_or_else(|| GitError::Output(format!("ls-tree entry {entry:?}")))?;
            wanted.push((path.to_string(), oid.to_string()));
        }
        let blobs = self.read_blobs(wanted.iter().map(|(_, oid)| oid.as_str()))?;
        Ok(FileTree {
            files: wanted.into_iter().map(|(p, _)| p).zip(blobs).collect(),
        })
    }

    /// Contents of several blobs through a single `cat-file --batch`.
    pub fn read_blobs<'a>(&self, oids: impl Iterator<Item = &'a str>) -> Result<Vec<Vec<u8>>, GitError> {
        let oids: Vec<&str> = oids.collect();
        if oids.is_empty() {
            return Ok(Vec::new());
        }
        let mut child = self
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let request: String = oids.iter().map(|o| format!("{o}\n")).collect();
        let writer = std::thread::spawn(move || stdin.write_all(request.as_bytes()));
        let mut reader = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut out = Vec::with_capacity(oids.len());
        for oid in &oids {
            let mut header = String::new();
            reader.read_line(&mut header)?;
            let fields: Vec<&str> = header.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(GitError::Output(format!("cat-file for {oid}: {}", header.trim())));
            }
            let size: usize = fields[2]
                .parse()
                .map_err(|_| GitError::Output(format!("cat-file size {}", fields[2])))?;
            let mut buf = vec![0u8; size + 1];
            reader.read_exact(&mut buf)?;
            buf.pop();
            out.push(buf);
        }
        writer
            .join()
            .map_err(|_| GitError::Output("cat-file writer panicked".into()))??;
        child.wait()?;
        Ok(out)
    }
}
