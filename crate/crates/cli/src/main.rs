use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fixstate::dataset::{csv_file_name, read_csv, TouchOptions};
use fixstate::eval::{
    evaluate_predictions, label, prf, read_predictions, read_results_csv, results_table,
    write_results_csv, Algorithm, CvConfig, Hyperparameters, ResultRow,
};
use fixstate::filter::FilterStrategy;
use fixstate::git::GitRepo;
use fixstate::ingest::{
    fetch_remote, load_snapshot, save_snapshot, snapshot_from_git, FetchOptions, TrackerIssue,
};
use fixstate::java::{ElementKind, PathFilter};
use fixstate::linker::{build_timelines, BuggyInterval, RefMode};
use fixstate::pipeline::{
    analyze_planned, build_dataset, evaluate_dataset, filter_dataset, link_outputs, run_pipeline,
    write_stats, EvalLevel, PipelineConfig, PipelineError, StageStatus,
};

#[derive(Parser)]
#[command(name = "fixstate", version, about = "Build and evaluate before-fix/after-fix bug datasets")]
struct Cli {
    /// Worker threads for analysis and evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capture a project snapshot from GitHub or from a local clone plus an issues file.
    Fetch(FetchArgs),
    /// Classify commits around each bug fix and write the analysis plan.
    Link(LinkArgs),
    /// Analyze the planned commits.
    Analyze(BuildArgs),
    /// Build the unfiltered dataset CSVs.
    Build(BuildArgs),
    /// Apply a conflict filter to a dataset directory.
    Filter(FilterArgs),
    /// Cross-validate learners on a dataset directory.
    Evaluate(EvaluateArgs),
    /// Significance tests over evaluation results.
    Stats(StatsArgs),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct FetchArgs {
    /// GitHub repository as owner/name; needs network access and GITHUB_TOKEN.
    #[arg(long, conflicts_with = "local")]
    remote: Option<String>,
    /// Local clone to read history from.
    #[arg(long, requires = "issues")]
    local: Option<PathBuf>,
    /// Tracker issues as a JSON array (with --local).
    #[arg(long)]
    issues: Option<PathBuf>,
    #[arg(long)]
    project: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "bug")]
    labels: Vec<String>,
    #[arg(long)]
    branch: Option<String>,
    #[arg(long, default_value = "any")]
    ref_mode: RefMode,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct LinkArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value = "from-issue-creation", value_parser = parse_interval)]
    interval: BuggyInterval,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, default_value = ".")]
    repo: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value = "from-issue-creation", value_parser = parse_interval)]
    interval: BuggyInterval,
    /// Path globs to leave out; defaults to test directories.
    #[arg(long)]
    exclude: Vec<String>,
    #[arg(long)]
    ignore_comment_only: bool,
    /// Analysis cache directory (default: <out>/analysis).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    /// Directory holding the unfiltered CSVs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    strategy: FilterStrategy,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory holding the dataset CSVs.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "method")]
    level: Vec<EvalLevel>,
    #[arg(long, value_delimiter = ',', default_value = "random_forest")]
    algo: Vec<Algorithm>,
    /// Strategy name recorded in the results.
    #[arg(long, default_value = "none")]
    filter: String,
    #[arg(long, default_value = "project")]
    project: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Score external predictions (hash,fqn,predicted) instead of training.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Results CSV to write.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Result CSVs written by `evaluate` or `run`.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    repo: Option<PathBuf>,
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long)]
    issues: Option<PathBuf>,
    #[arg(long)]
    remote: Option<String>,
    /// Allow fetching from GitHub.
    #[arg(long)]
    network: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    filter: Option<Vec<FilterStrategy>>,
    #[arg(long, value_delimiter = ',')]
    level: Option<Vec<EvalLevel>>,
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<Algorithm>>,
    #[arg(long)]
    no_evaluate: bool,
}

fn parse_interval(s: &str) -> Result<BuggyInterval, String> {
    match s {
        "from-issue-creation" => Ok(BuggyInterval::FromIssueCreation),
        "orange-only" => Ok(BuggyInterval::OrangeOnly),
        other => Err(format!("unknown interval `{other}`")),
    }
}

fn data(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn stage(name: &'static str) -> impl Fn(String) -> PipelineError {
    move |cause| PipelineError::Stage { stage: name, cause }
}

fn token() -> Option<String> {
    std::env::var("GITHUB_TOKEN").ok().filter(|t| !t.is_empty())
}

fn path_filter(exclude: &[String]) -> PathFilter {
    if exclude.is_empty() {
        PathFilter::default()
    } else {
        PathFilter {
            exclude: exclude.to_vec(),
        }
    }
}

fn fetch(a: FetchArgs) -> Result<(), PipelineError> {
    let labels: BTreeSet<String> = a.labels.into_iter().collect();
    let snap = if let Some(remote) = &a.remote {
        let opts = FetchOptions {
            bug_labels: labels,
            branch: a.branch,
            ref_mode: a.ref_mode,
            ..Default::default()
        };
        fetch_remote(remote, token().as_deref(), &a.out, &opts).map_err(|e| stage("fetch")(e.to_string()))?
    } else if let (Some(local), Some(issues)) = (&a.local, &a.issues) {
        let repo = GitRepo::open(local).map_err(|e| stage("fetch")(e.to_string()))?;
        let text = std::fs::read_to_string(issues).map_err(|e| data(format!("{}: {e}", issues.display())))?;
        let issues: Vec<TrackerIssue> = serde_json::from_str(&text).map_err(data)?;
        let project = a.project.unwrap_or_else(|| {
            std::fs::canonicalize(local)
                .ok()
                .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .unwrap_or_else(|| "project".into())
        });
        snapshot_from_git(&repo, &project, &issues, &labels, a.branch.as_deref(), a.ref_mode)
            .map_err(|e| stage("fetch")(e.to_string()))?
    } else {
        return Err(PipelineError::Config("either --remote or --local with --issues is required".into()));
    };
    save_snapshot(&snap, &a.out).map_err(data)?;
    println!(
        "{}: {} issues, {} commits",
        a.out.display(),
        snap.issues.len(),
        snap.commits.len()
    );
    Ok(())
}

fn link(a: LinkArgs) -> Result<(), PipelineError> {
    let snap = load_snapshot(&a.snapshot).map_err(data)?;
    for p in link_outputs(&snap, a.interval, &a.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn analyze_or_build(a: BuildArgs, build: bool) -> Result<(), PipelineError> {
    let snap = load_snapshot(&a.snapshot).map_err(data)?;
    let repo = GitRepo::open(&a.repo).map_err(|e| stage("analyze")(e.to_string()))?;
    let filter = path_filter(&a.exclude);
    let timelines = build_timelines(&snap, a.interval);
    let cache = a.cache.unwrap_or_else(|| a.out.join("analysis"));
    let analyses = analyze_planned(&repo, &snap, &timelines, &filter, &cache)?;
    println!("{} commits analyzed into {}", analyses.len(), cache.display());
    if build {
        let opts = TouchOptions {
            ignore_comment_only: a.ignore_comment_only,
        };
        for p in build_dataset(&snap, &timelines, &analyses, &filter, opts, &a.out)? {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn filter(a: FilterArgs) -> Result<(), PipelineError> {
    for p in filter_dataset(&a.input, &a.out, a.strategy, a.seed)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn external(a: &EvaluateArgs, path: &Path) -> Result<Vec<ResultRow>, PipelineError> {
    let preds = read_predictions(path).map_err(data)?;
    let mut rows = Vec::new();
    for level in &a.level {
        let kind = match level {
            EvalLevel::File => ElementKind::File,
            EvalLevel::Class => ElementKind::Class,
            EvalLevel::Method => ElementKind::Method,
            EvalLevel::Projected => {
                return Err(PipelineError::Config("external predictions are scored per level, not projected".into()))
            }
        };
        let entries = read_csv(&a.dataset.join(csv_file_name(kind, false)), kind).map_err(data)?;
        let m = evaluate_predictions(&label(&entries), &preds).map_err(data)?;
        let p = prf(&m);
        rows.push(ResultRow {
            project: a.project.clone(),
            filter: a.filter.clone(),
            level: kind.to_string(),
            algorithm: "external".into(),
            repeats: 1,
            folds: 0,
            tp: m.tp,
            fp: m.fp,
            tn: m.tn,
            fn_: m.fn_,
            precision: p.precision,
            recall: p.recall,
            f_measure: p.f_measure,
            undefined: p.undefined,
        });
    }
    Ok(rows)
}

fn evaluate(a: EvaluateArgs) -> Result<(), PipelineError> {
    if a.folds < 2 {
        return Err(PipelineError::Config("--folds must be at least 2".into()));
    }
    let rows = if let Some(p) = &a.predictions {
        external(&a, p)?
    } else {
        let cv = CvConfig {
            folds: a.folds,
            repeats: a.repeats,
            seed: a.seed,
            hyper: Hyperparameters {
                trees: a.trees,
                ..Default::default()
            },
        };
        evaluate_dataset(&a.dataset, &a.project, &a.filter, &a.level, &a.algo, &cv)?
    };
    print!("{}", results_table(&rows));
    if let Some(out) = &a.out {
        write_results_csv(&rows, out).map_err(data)?;
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), PipelineError> {
    let mut rows = Vec::new();
    for p in &a.results {
        rows.extend(read_results_csv(p).map_err(data)?);
    }
    print!("{}", fixstate::pipeline::filter_significance(&rows, a.alpha));
    println!();
    print!("{}", fixstate::pipeline::projection_significance(&rows));
    if let Some(out) = &a.out {
        write_stats(&rows, a.alpha, out)?;
    }
    Ok(())
}

fn run(a: RunArgs, jobs: Option<usize>) -> Result<(), PipelineError> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = a.repo {
        cfg.repo = v;
    }
    if let Some(v) = a.snapshot {
        cfg.snapshot = Some(v);
    }
    if let Some(v) = a.issues {
        cfg.issues = Some(v);
    }
    if let Some(v) = a.remote {
        cfg.remote = Some(v);
    }
    cfg.network |= a.network;
    if let Some(v) = a.output {
        cfg.output = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.repeats {
        cfg.repeats = v;
    }
    if let Some(v) = a.filter {
        cfg.filters = v;
    }
    if let Some(v) = a.level {
        cfg.levels = v;
    }
    if let Some(v) = a.algo {
        cfg.algorithms = v;
    }
    if a.no_evaluate {
        cfg.evaluate = false;
    }
    if jobs.is_some() {
        cfg.jobs = jobs;
    }
    let report = run_pipeline(&cfg, token().as_deref())?;
    for (name, status) in &report.stages {
        let s = match status {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
        };
        println!("{name:<9} {s}");
    }
    println!(
        "{} artifacts, manifest at {}",
        report.manifest.artifacts.len(),
        cfg.output.join("manifest.json").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        // Only the first pool build wins; `run` sizes its own pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let result = match cli.command {
        Command::Fetch(a) => fetch(a),
        Command::Link(a) => link(a),
        Command::Analyze(a) => analyze_or_build(a, false),
        Command::Build(a) => analyze_or_build(a, true),
        Command::Filter(a) => filter(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Stats(a) => stats(a),
        Command::Run(a) => run(a, cli.jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
