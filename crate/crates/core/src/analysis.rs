//! Static analysis of whole commits, with an on-disk cache keyed by commit
//! hash and analyzer version.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::git::{FileTree, GitError, GitRepo};
use crate::ingest::write_atomic;
use crate::java::{parse_elements, tokenize, ElementKind, PathFilter, SourceElement};
use crate::metrics::{analyze_source, MetricsVector};

/// Bumped whenever element extraction or metric rules change.
pub const ANALYZER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Git(#[from] GitError),
    #[error("cache file {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileResult {
    pub path: String,
    pub degraded: bool,
    /// File element first, then classes and methods by position.
    pub elements: Vec<SourceElement>,
    /// Aligned with `elements`; empty for positions-only analysis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<MetricsVector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommitAnalysis {
    pub hash: String,
    pub analyzer_version: u32,
    pub full: bool,
    pub files: Vec<FileResult>,
    /// `(kind, fqn)` pairs declared more than once; the first one wins.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub collisions: Vec<String>,
    #[serde(skip)]
    index: OnceLock<HashMap<(ElementKind, String), (usize, usize)>>,
}

impl PartialEq for CommitAnalysis {
    fn eq(&self, o: &Self) -> bool {
        self.hash == o.hash
            && self.analyzer_version == o.analyzer_version
            && self.full == o.full
            && self.files == o.files
            && self.collisions == o.collisions
    }
}

impl CommitAnalysis {
    fn index(&self) -> &HashMap<(ElementKind, String), (usize, usize)> {
        self.index.get_or_init(|| {
            let mut map = HashMap::new();
            for (fi, f) in self.files.iter().enumerate() {
                for (ei, e) in f.elements.iter().enumerate() {
                    map.entry((e.kind, e.fqn.clone())).or_insert((fi, ei));
                }
            }
            map
        })
    }

    pub fn file(&self, path: &str) -> Option<&FileResult> {
        self.files
            .binary_search_by(|f| f.path.as_str().cmp(path))
            .ok()
            .map(|i| &self.files[i])
    }

    pub fn element(&self, kind: ElementKind, fqn: &str) -> Option<&SourceElement> {
        let &(fi, ei) = self.index().get(&(kind, fqn.to_string()))?;
        Some(&self.files[fi].elements[ei])
    }

    pub fn metrics(&self, kind: ElementKind, fqn: &str) -> Option<&MetricsVector> {
        let &(fi, ei) = self.index().get(&(kind, fqn.to_string()))?;
        self.files[fi].metrics.get(ei)
    }

    pub fn elements(&self) -> impl Iterator<Item = &SourceElement> {
        self.files.iter().flat_map(|f| f.elements.iter())
    }
}

fn analyze_file(path: &str, bytes: &[u8], full: bool) -> FileResult {
    let source = String::from_utf8_lossy(bytes);
    if full {
        let a = analyze_source(path, &source);
        let (elements, metrics) = a.elements.into_iter().unzip();
        FileResult {
            path: path.to_string(),
            degraded: a.degraded,
            elements,
            metrics,
        }
    } else {
        let ts = tokenize(&source);
        let parsed = crate::java::parse_file(path, &ts);
        FileResult {
            path: path.to_string(),
            degraded: parsed.degraded || !ts.diagnostics().is_empty(),
            elements: parse_elements(path, &ts),
            metrics: Vec::new(),
        }
    }
}

/// Analyzes every file of a tree. `full` adds metrics to the positions.
pub fn analyze_tree(hash: &str, tree: &FileTree, full: bool) -> CommitAnalysis {
    let files: Vec<FileResult> = tree
        .files
        .par_iter()
        .map(|(path, bytes)| analyze_file(path, bytes, full))
        .collect();
    let mut seen = HashMap::new();
    let mut collisions = Vec::new();
    for f in &files {
        for e in &f.elements {
            if seen.insert((e.kind, e.fqn.as_str()), ()).is_some() {
                collisions.push(format!("{} {}", e.kind, e.fqn));
            }
        }
    }
    CommitAnalysis {
        hash: hash.to_string(),
        analyzer_version: ANALYZER_VERSION,
        full,
        files,
        collisions,
        index: OnceLock::new(),
    }
}

/// Per-commit results stored as `<dir>/<hash>.v<version>.json`.
#[derive(Debug, Clone)]
pub struct AnalysisCache {
    dir: PathBuf,
}

impl AnalysisCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.v{ANALYZER_VERSION}.json"))
    }

    /// A cached result good enough for the request, if any.
    pub fn load(&self, hash: &str, full: bool) -> Result<Option<CommitAnalysis>, AnalysisError> {
        let path = self.path(hash);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(AnalysisError::Cache {
                    path,
                    message: e.to_string(),
                })
            }
        };
        let a: CommitAnalysis = serde_json::from_str(&text).map_err(|e| AnalysisError::Cache {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok((a.hash == hash && a.analyzer_version == ANALYZER_VERSION && (a.full || !full)).then_some(a))
    }

    pub fn store(&self, a: &CommitAnalysis) -> Result<(), AnalysisError> {
        let path = self.path(&a.hash);
        let mut text = serde_json::to_string(a).expect("analysis serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes()).map_err(|e| AnalysisError::Cache {
            path,
            message: e.to_string(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Loads from the cache or analyzes the commit's tree and caches it.
pub fn analyze_commit(
    repo: &GitRepo,
    hash: &str,
    full: bool,
    filter: &PathFilter,
    cache: Option<&AnalysisCache>,
) -> Result<CommitAnalysis, AnalysisError> {
    if let Some(c) = cache {
        if let Some(a) = c.load(hash, full)? {
            return Ok(a);
        }
    }
    let tree = repo.checkout(hash, Some(filter))?;
    let a = analyze_tree(hash, &tree, full);
    if let Some(c) = cache {
        c.store(&a)?;
    }
    Ok(a)
}
