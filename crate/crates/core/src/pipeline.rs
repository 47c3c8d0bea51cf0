//! End-to-end orchestration: ingest, link, analyze, build, filter,
//! evaluate and stats, with per-stage fingerprints so unchanged stages are
//! reused on rerun.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{analyze_commit, AnalysisCache, CommitAnalysis, ANALYZER_VERSION};
use crate::dataset::{
    accumulate_issue_touches, build_entries, csv_file_name, export_csv, export_dataset,
    export_drop_log, read_csv, TouchOptions,
};
use crate::eval::{
    cross_validate, label, project_result, results_table, write_results_csv, Algorithm, CvConfig,
    EvalError, Hyperparameters, ResultRow,
};
use crate::filter::{apply_filter, FilterStrategy};
use crate::git::GitRepo;
use crate::ingest::{
    fetch_remote, load_snapshot, save_snapshot, snapshot_from_git, write_atomic, FetchOptions,
    ProjectSnapshot, TrackerIssue,
};
use crate::java::{ElementKind, PathFilter};
use crate::linker::{
    build_timelines, select_analysis_commits, BugFixTimeline, BuggyInterval, HistoryIndex, RefMode,
};
use crate::stats::{
    effect_size_r, friedman, nemenyi, wilcoxon_signed_rank, PairedSampleMatrix, Z_CRIT,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: &'static str, cause: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Stage { .. } => 4,
        }
    }

    fn stage(stage: &'static str, cause: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            cause: cause.to_string(),
        }
    }
}

/// Levels that can be evaluated; `projected` maps method predictions onto
/// their classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalLevel {
    File,
    Class,
    Method,
    Projected,
}

impl EvalLevel {
    pub const ALL: [EvalLevel; 4] = [EvalLevel::File, EvalLevel::Class, EvalLevel::Method, EvalLevel::Projected];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalLevel::File => "file",
            EvalLevel::Class => "class",
            EvalLevel::Method => "method",
            EvalLevel::Projected => "projected",
        }
    }
}

impl FromStr for EvalLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" => Ok(EvalLevel::File),
            "class" => Ok(EvalLevel::Class),
            "method" => Ok(EvalLevel::Method),
            "projected" => Ok(EvalLevel::Projected),
            other => Err(format!("unknown level `{other}`")),
        }
    }
}

fn default_labels() -> BTreeSet<String> {
    BTreeSet::from(["bug".to_string()])
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Pipeline settings, read from TOML. Every key is optional except that
/// one issue source is needed: `snapshot`, `issues` or `remote`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Local clone of the project.
    pub repo: PathBuf,
    /// Project name recorded in snapshots and result tables.
    pub project: Option<String>,
    /// Existing snapshot to use as is.
    pub snapshot: Option<PathBuf>,
    /// Tracker issues as a JSON array, assembled against the local history.
    pub issues: Option<PathBuf>,
    /// `owner/name` to fetch from GitHub when no snapshot or issues file
    /// is given.
    pub remote: Option<String>,
    /// Allows network access for `remote`.
    pub network: bool,
    pub bug_labels: BTreeSet<String>,
    pub branch: Option<String>,
    pub ref_mode: RefMode,
    pub buggy_interval: BuggyInterval,
    pub exclude: Vec<String>,
    pub ignore_comment_only: bool,
    pub filters: Vec<FilterStrategy>,
    pub levels: Vec<EvalLevel>,
    pub algorithms: Vec<Algorithm>,
    pub evaluate: bool,
    pub seed: u64,
    pub repeats: usize,
    pub folds: usize,
    pub alpha: f64,
    pub hyper: Hyperparameters,
    pub output: PathBuf,
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            repo: PathBuf::from("."),
            project: None,
            snapshot: None,
            issues: None,
            remote: None,
            network: false,
            bug_labels: default_labels(),
            branch: None,
            ref_mode: RefMode::Any,
            buggy_interval: BuggyInterval::FromIssueCreation,
            exclude: PathFilter::default().exclude,
            ignore_comment_only: false,
            filters: FilterStrategy::ALL.to_vec(),
            levels: EvalLevel::ALL.to_vec(),
            algorithms: Algorithm::BUILTIN.to_vec(),
            evaluate: true,
            seed: 1,
            repeats: 1,
            folds: 10,
            alpha: 0.05,
            hyper: Hyperparameters::default(),
            output: default_output(),
            jobs: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths in the file are relative to the file.
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            for p in [Some(&mut cfg.repo), cfg.snapshot.as_mut(), cfg.issues.as_mut(), Some(&mut cfg.output)]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if self.levels.is_empty() {
            return Err(PipelineError::Config("at least one level is required".into()));
        }
        if self.folds < 2 {
            return Err(PipelineError::Config("folds must be at least 2".into()));
        }
        if self.bug_labels.is_empty() {
            return Err(PipelineError::Config("bug_labels is empty".into()));
        }
        if self.jobs == Some(0) {
            return Err(PipelineError::Config("jobs must be positive".into()));
        }
        Ok(())
    }

    pub fn project_name(&self) -> String {
        if let Some(p) = &self.project {
            return p.clone();
        }
        if let Some(r) = &self.remote {
            return r.clone();
        }
        std::fs::canonicalize(&self.repo)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "project".to_string())
    }

    pub fn path_filter(&self) -> PathFilter {
        PathFilter {
            exclude: self.exclude.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StageRecord {
    fingerprint: String,
    /// Output path relative to the output directory, and its SHA-256.
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: Vec<String>,
    pub artifacts: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub stages: Vec<(&'static str, StageStatus)>,
    pub manifest: Manifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha(path: &Path) -> Option<String> {
    std::fs::read(path).ok().map(|b| sha256_hex(&b))
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

struct Runner<'a> {
    out: &'a Path,
    report: Vec<(&'static str, StageStatus)>,
    digests: HashMap<&'static str, String>,
}

impl<'a> Runner<'a> {
    fn record_path(&self, stage: &str) -> PathBuf {
        self.out.join(".stages").join(format!("{stage}.json"))
    }

    fn digest_of(record: &StageRecord) -> String {
        sha256_hex(serde_json::to_string(record).expect("record serializes").as_bytes())
    }

    /// Runs `f` unless a previous run recorded the same fingerprint and its
    /// outputs are still intact.
    fn stage<K: Serialize>(
        &mut self,
        name: &'static str,
        upstream: &[&'static str],
        key: &K,
        f: impl FnOnce() -> Result<Vec<PathBuf>, PipelineError>,
    ) -> Result<StageStatus, PipelineError> {
        let ups: Vec<&str> = upstream.iter().map(|u| self.digests[u].as_str()).collect();
        let fp = sha256_hex(
            serde_json::to_string(&(name, ANALYZER_VERSION, &ups, key))
                .expect("key serializes")
                .as_bytes(),
        );
        let rp = self.record_path(name);
        let previous: Option<StageRecord> = std::fs::read_to_string(&rp)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        if let Some(prev) = previous {
            let intact = prev.fingerprint == fp
                && prev
                    .outputs
                    .iter()
                    .all(|(p, h)| file_sha(&self.out.join(p)).as_deref() == Some(h.as_str()));
            if intact {
                log::info!("stage {name}: cached");
                self.digests.insert(name, Self::digest_of(&prev));
                self.report.push((name, StageStatus::Cached));
                return Ok(StageStatus::Cached);
            }
        }
        let _ = std::fs::remove_file(&rp);
        let t = Instant::now();
        let outputs = f()?;
        let mut map = BTreeMap::new();
        for p in outputs {
            let h = file_sha(&p).ok_or_else(|| PipelineError::stage(name, format!("missing output {}", p.display())))?;
            map.insert(rel(self.out, &p), h);
        }
        let record = StageRecord { fingerprint: fp, outputs: map };
        let text = serde_json::to_string_pretty(&record).expect("record serializes") + "\n";
        write_atomic(&rp, text.as_bytes()).map_err(|e| PipelineError::stage(name, e))?;
        log::info!("stage {name}: ran in {:.2?}", t.elapsed());
        self.digests.insert(name, Self::digest_of(&record));
        self.report.push((name, StageStatus::Ran));
        Ok(StageStatus::Ran)
    }
}

pub fn snapshot_path(out: &Path) -> PathBuf {
    out.join("snapshot").join("snapshot.json")
}

fn read_issues(path: &Path) -> Result<Vec<TrackerIssue>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

/// Writes `timelines.json` and `plan.txt` into `dir`.
pub fn link_outputs(
    snapshot: &ProjectSnapshot,
    interval: BuggyInterval,
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let timelines = build_timelines(snapshot, interval);
    let history = HistoryIndex::new(snapshot);
    let plan = select_analysis_commits(&timelines, &history);
    let tl = dir.join("timelines.json");
    let pl = dir.join("plan.txt");
    let text = serde_json::to_string_pretty(&timelines).expect("timelines serialize") + "\n";
    write_atomic(&tl, text.as_bytes()).map_err(|e| PipelineError::stage("link", e))?;
    write_atomic(&pl, plan.to_text().as_bytes()).map_err(|e| PipelineError::stage("link", e))?;
    Ok(vec![tl, pl])
}

pub fn read_timelines(path: &Path) -> Result<Vec<BugFixTimeline>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

/// Analyzes the planned commits, full or positions-only, plus the support
/// commits needed to map fix diffs. Results are cached in `cache_dir`.
pub fn analyze_planned(
    repo: &GitRepo,
    snapshot: &ProjectSnapshot,
    timelines: &[BugFixTimeline],
    filter: &PathFilter,
    cache_dir: &Path,
) -> Result<HashMap<String, CommitAnalysis>, PipelineError> {
    let history = HistoryIndex::new(snapshot);
    let plan = select_analysis_commits(timelines, &history);
    let mut work: Vec<(String, bool)> = plan.entries.iter().map(|e| (e.hash.clone(), e.full_analysis)).collect();
    work.extend(plan.support.iter().map(|h| (h.clone(), false)));
    let cache = AnalysisCache::new(cache_dir);
    let done: Result<Vec<(String, CommitAnalysis)>, PipelineError> = work
        .par_iter()
        .map(|(h, full)| {
            analyze_commit(repo, h, *full, filter, Some(&cache))
                .map(|a| (h.clone(), a))
                .map_err(|e| PipelineError::stage("analyze", format!("{h}: {e}")))
        })
        .collect();
    Ok(done?.into_iter().collect())
}

/// Builds the unfiltered dataset into `dir` (four CSVs and the drop log).
pub fn build_dataset(
    snapshot: &ProjectSnapshot,
    timelines: &[BugFixTimeline],
    analyses: &HashMap<String, CommitAnalysis>,
    filter: &PathFilter,
    opts: TouchOptions,
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let fail = |e: crate::dataset::DatasetError| PipelineError::stage("build", e);
    let history = HistoryIndex::new(snapshot);
    let live: Vec<&BugFixTimeline> = timelines.iter().filter(|t| !t.is_degraded()).collect();
    let touches = live
        .par_iter()
        .map(|t| accumulate_issue_touches(t, snapshot, analyses, filter, opts))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    for note in touches.iter().flat_map(|t| t.notes.iter().map(move |n| (t.issue_id, n))) {
        log::info!("issue #{}: {}", note.0, note.1);
    }
    let dataset = build_entries(&touches, timelines, &history, analyses).map_err(fail)?;
    let mut written = export_dataset(&dataset, dir).map_err(fail)?;
    let log = dir.join("drop_log.csv");
    export_drop_log(&dataset.drops, &log).map_err(fail)?;
    written.push(log);
    Ok(written)
}

/// Applies a strategy to every CSV of `input` and writes the results to
/// `output`. `method-p.csv` is derived from the filtered method rows.
pub fn filter_dataset(
    input: &Path,
    output: &Path,
    strategy: FilterStrategy,
    seed: u64,
) -> Result<Vec<PathBuf>, PipelineError> {
    let fail = |e: crate::dataset::DatasetError| PipelineError::stage("filter", e);
    let mut written = Vec::new();
    for (li, level) in ElementKind::ALL.into_iter().enumerate() {
        let with_parent = level == ElementKind::Method;
        let src = input.join(csv_file_name(level, with_parent));
        let entries = read_csv(&src, level).map_err(fail)?;
        let kept = apply_filter(&entries, strategy, crate::eval::derive_seed(seed, &[li as u64]));
        let p = output.join(csv_file_name(level, false));
        export_csv(&kept, level, false, &p).map_err(fail)?;
        written.push(p);
        if with_parent {
            let p = output.join(csv_file_name(level, true));
            export_csv(&kept, level, true, &p).map_err(fail)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Cross-validates every algorithm at every level of one dataset
/// directory. Levels whose data cannot be evaluated are skipped with a
/// warning.
pub fn evaluate_dataset(
    dir: &Path,
    project: &str,
    filter: &str,
    levels: &[EvalLevel],
    algorithms: &[Algorithm],
    cv: &CvConfig,
) -> Result<Vec<ResultRow>, PipelineError> {
    let fail = |e: crate::dataset::DatasetError| PipelineError::stage("evaluate", e);
    let mut rows = Vec::new();
    for &level in levels {
        let (kind, with_parent) = match level {
            EvalLevel::File => (ElementKind::File, false),
            EvalLevel::Class => (ElementKind::Class, false),
            EvalLevel::Method => (ElementKind::Method, false),
            EvalLevel::Projected => (ElementKind::Method, true),
        };
        let entries = read_csv(&dir.join(csv_file_name(kind, with_parent)), kind).map_err(fail)?;
        let set = label(&entries);
        for &algo in algorithms {
            let r = match cross_validate(algo, &set, kind.as_str(), cv) {
                Ok(r) => r,
                Err(e @ (EvalError::MissingClass(_) | EvalError::TooFew { .. })) => {
                    log::warn!("{project}/{filter}/{}: {algo} skipped: {e}", level.as_str());
                    continue;
                }
                Err(e) => return Err(PipelineError::stage("evaluate", e)),
            };
            let r = if level == EvalLevel::Projected { project_result(&r, &set) } else { r };
            rows.push(ResultRow::new(project, filter, &r));
        }
    }
    Ok(rows)
}

fn insufficient(title: &str, why: &str) -> String {
    format!("{title}\ninsufficient data: {why}\n")
}

/// Friedman and Nemenyi over filter strategies. Each row of the paired
/// matrix is one (project, level, algorithm) cell holding an F-measure per
/// strategy.
pub fn filter_significance(rows: &[ResultRow], alpha: f64) -> String {
    let title = "Filter strategies: Friedman test and Nemenyi post-hoc on F-measure";
    let mut filters: Vec<String> = rows.iter().map(|r| r.filter.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    filters.sort_by_key(|f| f.parse::<FilterStrategy>().map(|s| s as usize).unwrap_or(usize::MAX));
    let mut cells: BTreeMap<(&str, &str, &str), BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.level != "projected") {
        cells
            .entry((&r.project, &r.level, &r.algorithm))
            .or_default()
            .insert(&r.filter, r.f_measure);
    }
    let matrix: Vec<Vec<f64>> = cells
        .values()
        .filter(|m| m.len() == filters.len())
        .map(|m| filters.iter().map(|f| m[f.as_str()]).collect())
        .collect();
    let m = match PairedSampleMatrix::new(matrix) {
        Ok(m) => m,
        Err(e) => return insufficient(title, &e.to_string()),
    };
    let fr = friedman(&m);
    let ne = match nemenyi(&m, alpha) {
        Ok(n) => n,
        Err(e) => return insufficient(title, &e.to_string()),
    };
    let mut s = String::new();
    writeln!(s, "{title}").unwrap();
    writeln!(
        s,
        "N = {}, k = {}, chi-square = {:.4}, df = {}, p = {:.4}",
        m.n(),
        m.k(),
        fr.statistic,
        m.k() - 1,
        fr.p_value
    )
    .unwrap();
    writeln!(s, "q_crit = {:.3} (alpha = {alpha}), critical rank difference = {:.4}", ne.q_crit, ne.cd).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "{:<10} {:>9}", "strategy", "mean rank").unwrap();
    for (f, r) in filters.iter().zip(&ne.mean_ranks) {
        writeln!(s, "{f:<10} {r:>9.4}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "p value (rank difference, row minus column)").unwrap();
    let w = 18;
    write!(s, "{:<10}", "").unwrap();
    for f in &filters[1..] {
        write!(s, "{f:>w$}").unwrap();
    }
    writeln!(s).unwrap();
    for i in 0..filters.len() - 1 {
        write!(s, "{:<10}", filters[i]).unwrap();
        for j in 1..filters.len() {
            if j <= i {
                write!(s, "{:>w$}", "").unwrap();
            } else {
                let cell = format!("{:.3} ({:+.3})", ne.p[i][j], ne.rank_diff[i][j]);
                write!(s, "{cell:>w$}").unwrap();
            }
        }
        writeln!(s).unwrap();
    }
    s
}

/// Wilcoxon signed-rank test of projected against class-level F-measure,
/// paired by (project, filter, algorithm), with the effect size.
pub fn projection_significance(rows: &[ResultRow]) -> String {
    let title = "Projected vs class level: Wilcoxon signed-rank test on F-measure";
    let mut pairs: BTreeMap<(&str, &str, &str), [Option<f64>; 2]> = BTreeMap::new();
    for r in rows {
        let slot = match r.level.as_str() {
            "projected" => 0,
            "class" => 1,
            _ => continue,
        };
        pairs.entry((&r.project, &r.filter, &r.algorithm)).or_default()[slot] = Some(r.f_measure);
    }
    let (a, b): (Vec<f64>, Vec<f64>) = pairs
        .values()
        .filter_map(|p| Some((p[0]?, p[1]?)))
        .unzip();
    let w = match wilcoxon_signed_rank(&a, &b) {
        Ok(w) => w,
        Err(e) => return insufficient(title, &e.to_string()),
    };
    let mut s = String::new();
    writeln!(s, "{title}").unwrap();
    writeln!(s, "pairs = {}, nonzero differences = {}", a.len(), w.n).unwrap();
    if w.degenerate {
        writeln!(s, "all differences are zero: z = 0, p = 1").unwrap();
        return s;
    }
    let r = effect_size_r(w.z, w.n).expect("n > 0");
    writeln!(s, "W+ = {:.1}, z = {:.4}, p = {:.4}", w.w_plus, w.z, w.p).unwrap();
    writeln!(
        s,
        "{} at |z| > {Z_CRIT}",
        if w.z.abs() > Z_CRIT { "significant" } else { "not significant" }
    )
    .unwrap();
    writeln!(s, "r = {:.4} ({:?})", r.r, r.label).unwrap();
    s
}

/// Writes both significance reports into `dir`.
pub fn write_stats(rows: &[ResultRow], alpha: f64, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let a = dir.join("filters.txt");
    let b = dir.join("projection.txt");
    write_atomic(&a, filter_significance(rows, alpha).as_bytes())
        .map_err(|e| PipelineError::stage("stats", e))?;
    write_atomic(&b, projection_significance(rows).as_bytes()).map_err(|e| PipelineError::stage("stats", e))?;
    Ok(vec![a, b])
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(rd) = std::fs::read_dir(dir) else { return };
    let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out);
        } else {
            out.push(p);
        }
    }
}

/// Every artifact under `out` except stage records and the manifest.
pub fn build_manifest(out: &Path, stages: &[(&'static str, StageStatus)]) -> Manifest {
    let mut files = Vec::new();
    collect_files(out, &mut files);
    let mut artifacts: Vec<ManifestEntry> = files
        .iter()
        .map(|p| (rel(out, p), p))
        .filter(|(r, _)| !r.starts_with(".stages/") && r != "manifest.json")
        .map(|(r, p)| {
            let bytes = std::fs::read(p).unwrap_or_default();
            ManifestEntry {
                path: r,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            }
        })
        .collect();
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    Manifest {
        stages: stages.iter().map(|(s, _)| s.to_string()).collect(),
        artifacts,
    }
}

/// Which stages to run: everything up to and including `last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageName {
    Ingest,
    Link,
    Analyze,
    Build,
    Filter,
    Evaluate,
    Stats,
}

/// Runs the whole pipeline. `token` authenticates remote fetches.
pub fn run_pipeline(cfg: &PipelineConfig, token: Option<&str>) -> Result<RunReport, PipelineError> {
    run_until(cfg, token, StageName::Stats)
}

pub fn run_until(cfg: &PipelineConfig, token: Option<&str>, last: StageName) -> Result<RunReport, PipelineError> {
    cfg.check()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    pool.install(|| run_stages(cfg, token, last))
}

fn run_stages(cfg: &PipelineConfig, token: Option<&str>, last: StageName) -> Result<RunReport, PipelineError> {
    let out = cfg.output.as_path();
    std::fs::create_dir_all(out).map_err(|e| PipelineError::Config(format!("{}: {e}", out.display())))?;
    let mut runner = Runner {
        out,
        report: Vec::new(),
        digests: HashMap::new(),
    };
    let snap_path = snapshot_path(out);
    let project = cfg.project_name();
    let filter = cfg.path_filter();

    // ingest
    let repo_needed = cfg.snapshot.is_none() && cfg.issues.is_some() || last >= StageName::Analyze;
    let repo = if repo_needed {
        Some(GitRepo::open(&cfg.repo).map_err(|e| PipelineError::stage("ingest", e))?)
    } else {
        None
    };
    let ingest_key = if let Some(s) = &cfg.snapshot {
        let h = file_sha(s).ok_or_else(|| PipelineError::stage("ingest", format!("cannot read snapshot {}", s.display())))?;
        serde_json::json!({ "snapshot": h })
    } else if let Some(i) = &cfg.issues {
        let h = file_sha(i).ok_or_else(|| PipelineError::stage("ingest", format!("cannot read issues {}", i.display())))?;
        let repo = repo.as_ref().expect("opened above");
        let head = repo
            .resolve(cfg.branch.as_deref().unwrap_or("HEAD"))
            .map_err(|e| PipelineError::stage("ingest", e))?;
        serde_json::json!({ "issues": h, "head": head, "labels": cfg.bug_labels, "branch": cfg.branch, "refs": cfg.ref_mode, "project": project })
    } else if let (Some(r), true) = (&cfg.remote, cfg.network) {
        serde_json::json!({ "remote": r, "labels": cfg.bug_labels, "branch": cfg.branch, "refs": cfg.ref_mode })
    } else {
        return Err(PipelineError::stage(
            "ingest",
            "no snapshot or issues file configured, and remote fetching is not enabled",
        ));
    };
    runner.stage("ingest", &[], &ingest_key, || {
        let snap = if let Some(s) = &cfg.snapshot {
            load_snapshot(s).map_err(|e| PipelineError::Data(e.to_string()))?
        } else if let Some(i) = &cfg.issues {
            let issues = read_issues(i)?;
            snapshot_from_git(
                repo.as_ref().expect("opened above"),
                &project,
                &issues,
                &cfg.bug_labels,
                cfg.branch.as_deref(),
                cfg.ref_mode,
            )
            .map_err(|e| PipelineError::stage("ingest", e))?
        } else {
            let opts = FetchOptions {
                bug_labels: cfg.bug_labels.clone(),
                branch: cfg.branch.clone(),
                ref_mode: cfg.ref_mode,
                ..Default::default()
            };
            let r = cfg.remote.as_deref().expect("checked above");
            fetch_remote(r, token, &snap_path, &opts).map_err(|e| PipelineError::stage("ingest", e))?
        };
        save_snapshot(&snap, &snap_path).map_err(|e| PipelineError::Data(e.to_string()))?;
        Ok(vec![snap_path.clone()])
    })?;
    let load = || load_snapshot(&snap_path).map_err(|e| PipelineError::Data(e.to_string()));
    if last == StageName::Ingest {
        return finish(runner, out);
    }

    // link
    runner.stage("link", &["ingest"], &cfg.buggy_interval, || {
        link_outputs(&load()?, cfg.buggy_interval, out)
    })?;
    if last == StageName::Link {
        return finish(runner, out);
    }

    // analyze
    let analysis_dir = out.join("analysis");
    let repo = repo.expect("repository opened for analysis");
    let mut analyses: Option<HashMap<String, CommitAnalysis>> = None;
    runner.stage("analyze", &["link"], &filter, || {
        let snap = load()?;
        let timelines = read_timelines(&out.join("timelines.json"))?;
        let a = analyze_planned(&repo, &snap, &timelines, &filter, &analysis_dir)?;
        let mut files: Vec<PathBuf> = a.keys().map(|h| AnalysisCache::new(&analysis_dir).path(h)).collect();
        files.sort();
        analyses = Some(a);
        Ok(files)
    })?;
    if last == StageName::Analyze {
        return finish(runner, out);
    }

    // build
    let dataset_dir = out.join("dataset");
    let full_dir = dataset_dir.join(FilterStrategy::None.dir_name());
    let touch = TouchOptions {
        ignore_comment_only: cfg.ignore_comment_only,
    };
    runner.stage("build", &["analyze"], &(touch.ignore_comment_only, &filter), || {
        let snap = load()?;
        let timelines = read_timelines(&out.join("timelines.json"))?;
        let a = match analyses.take() {
            Some(a) => a,
            None => analyze_planned(&repo, &snap, &timelines, &filter, &analysis_dir)?,
        };
        build_dataset(&snap, &timelines, &a, &filter, touch, &full_dir)
    })?;
    if last == StageName::Build {
        return finish(runner, out);
    }

    // filter
    let strategies: Vec<FilterStrategy> = cfg
        .filters
        .iter()
        .copied()
        .filter(|s| *s != FilterStrategy::None)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    runner.stage("filter", &["build"], &(cfg.seed, &strategies), || {
        let mut written = Vec::new();
        for s in &strategies {
            written.extend(filter_dataset(&full_dir, &dataset_dir.join(s.dir_name()), *s, cfg.seed)?);
        }
        Ok(written)
    })?;
    if last == StageName::Filter || !cfg.evaluate {
        return finish(runner, out);
    }

    // evaluate
    let mut all_filters: Vec<FilterStrategy> = cfg.filters.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if all_filters.is_empty() {
        all_filters.push(FilterStrategy::None);
    }
    let cv = CvConfig {
        folds: cfg.folds,
        repeats: cfg.repeats,
        seed: cfg.seed,
        hyper: cfg.hyper.clone(),
    };
    let eval_dir = out.join("eval");
    let results_csv = eval_dir.join("results.csv");
    runner.stage(
        "evaluate",
        &["filter"],
        &(&all_filters, &cfg.levels, &cfg.algorithms, &cv, &project),
        || {
            let mut rows = Vec::new();
            for s in &all_filters {
                rows.extend(evaluate_dataset(
                    &dataset_dir.join(s.dir_name()),
                    &project,
                    s.as_str(),
                    &cfg.levels,
                    &cfg.algorithms,
                    &cv,
                )?);
            }
            let txt = eval_dir.join("results.txt");
            write_results_csv(&rows, &results_csv).map_err(|e| PipelineError::stage("evaluate", e))?;
            write_atomic(&txt, results_table(&rows).as_bytes()).map_err(|e| PipelineError::stage("evaluate", e))?;
            Ok(vec![results_csv.clone(), txt])
        },
    )?;
    if last == StageName::Evaluate {
        return finish(runner, out);
    }

    // stats
    runner.stage("stats", &["evaluate"], &cfg.alpha, || {
        let rows = crate::eval::read_results_csv(&results_csv).map_err(|e| PipelineError::stage("stats", e))?;
        write_stats(&rows, cfg.alpha, &out.join("stats"))
    })?;
    finish(runner, out)
}

fn finish(runner: Runner<'_>, out: &Path) -> Result<RunReport, PipelineError> {
    let manifest = build_manifest(out, &runner.report);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_atomic(&out.join("manifest.json"), text.as_bytes()).map_err(|e| PipelineError::stage("manifest", e))?;
    Ok(RunReport {
        stages: runner.report,
        manifest,
    })
}
