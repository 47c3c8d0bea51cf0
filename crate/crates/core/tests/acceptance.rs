//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the summary prints in order and the exit status reflects
//! every criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use fixstate::dataset::{read_csv, DatasetEntry};
use fixstate::diff::{elements_touched, LineRangeSet};
use fixstate::eval::{
    cross_validate, prf, project_result, project_to_class, undersample, Algorithm, ConfusionMatrix,
    CvConfig, Hyperparameters, LabeledInstance, LabeledSet, MethodPrediction,
};
use fixstate::filter::{apply_filter, target_counts, FilterStrategy};
use fixstate::git::GitRepo;
use fixstate::ingest::load_snapshot;
use fixstate::java::{ElementKind, SourceElement};
use fixstate::linker::{build_timelines, BuggyInterval};
use fixstate::metrics::MetricsVector;
use fixstate::pipeline::{run_pipeline, run_until, PipelineConfig, StageName};
use fixstate::stats::{
    effect_size_r, friedman, nemenyi, q_critical, rate, wilcoxon_signed_rank, PairedSampleMatrix,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use common::{build_fixture, Fixture};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn fixture_config(fx: &Fixture, out: &Path) -> PipelineConfig {
    PipelineConfig {
        repo: fx.dir.clone(),
        project: Some("fixture".into()),
        issues: Some(fx.issues.clone()),
        output: out.to_path_buf(),
        folds: 2,
        algorithms: vec![Algorithm::OneR, Algorithm::DecisionTree, Algorithm::RandomForest],
        hyper: Hyperparameters {
            trees: 10,
            min_bucket: 1,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn entry(i: usize, buggy: bool) -> DatasetEntry {
    DatasetEntry {
        commit_hash: format!("{:040x}", i),
        fqn: format!("p.K.m{i}()void"),
        level: ElementKind::Method,
        parent_fqn: Some("p.K".into()),
        metrics: MetricsVector {
            level: ElementKind::Method,
            values: vec![Some(3.0), Some(1.0), Some(7.0)],
        },
        bug_count: buggy as u32,
    }
}

fn closed_form(b: usize, c: usize, s: FilterStrategy, coin: bool) -> (usize, usize) {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    if b == 0 || c == 0 {
        return (b, c);
    }
    match s {
        FilterStrategy::None => (b, c),
        FilterStrategy::Removal if b == c => (0, 0),
        FilterStrategy::Removal if b > c => (b, 0),
        FilterStrategy::Removal => (0, c),
        FilterStrategy::Subtract if b >= c => (b - c, 0),
        FilterStrategy::Subtract => (0, c - b),
        FilterStrategy::Single if b == c => if coin { (1, 0) } else { (0, 1) },
        FilterStrategy::Single if b > c => (1, 0),
        FilterStrategy::Single => (0, 1),
        FilterStrategy::Gcf => (b / gcd(b, c), c / gcd(b, c)),
    }
}

fn filter_semantics() -> Outcome {
    let expected = [
        (FilterStrategy::Removal, (0, 20)),
        (FilterStrategy::Subtract, (0, 10)),
        (FilterStrategy::Single, (0, 1)),
        (FilterStrategy::Gcf, (1, 2)),
    ];
    let group: Vec<DatasetEntry> = (0..30).map(|i| entry(i, i < 10)).collect();
    for (s, want) in expected {
        let got = target_counts(10, 20, s, false);
        ensure(got == want, || format!("{s:?} on 10:20 gave {got:?}"))?;
        let kept = apply_filter(&group, s, 5);
        let b = kept.iter().filter(|e| e.bug_count > 0).count();
        ensure((b, kept.len() - b) == want, || format!("{s:?} applied kept {}:{}", b, kept.len() - b))?;
    }
    let mut rng = StdRng::seed_from_u64(1000);
    for _ in 0..1000 {
        let (b, c) = (rng.random_range(0..60), rng.random_range(0..60));
        let coin = rng.random_bool(0.5);
        for s in FilterStrategy::ALL {
            let got = target_counts(b, c, s, coin);
            ensure(got == closed_form(b, c, s, coin), || format!("{s:?} on {b}:{c} gave {got:?}"))?;
        }
    }
    Ok("10:20 worked examples, 1000 random pairs x 5 strategies".into())
}

fn timeline_classification() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = build_fixture(tmp.path());
    let out = tmp.path().join("out");
    let cfg = PipelineConfig {
        evaluate: false,
        ..fixture_config(&fx, &out)
    };
    run_until(&cfg, None, StageName::Link).map_err(|e| e.to_string())?;
    let snap = load_snapshot(&out.join("snapshot/snapshot.json")).map_err(|e| e.to_string())?;
    let tl = build_timelines(&snap, BuggyInterval::FromIssueCreation);
    let h = |ns: &[usize]| ns.iter().map(|&n| fx.c(n).to_string()).collect::<Vec<_>>();
    let want = [
        (1, 4, vec![5], vec![], vec![4], 5),
        (2, 6, vec![7, 9], vec![8], vec![6], 9),
        (3, 9, vec![10], vec![], vec![7, 8, 9], 10),
    ];
    ensure(tl.len() == want.len(), || format!("{} timelines", tl.len()))?;
    for (t, (id, orange, green, gray, blue, fixed)) in tl.iter().zip(want) {
        let got = (t.issue_id, t.orange.as_str(), &t.green, &t.gray, &t.blue, t.fixed.as_str());
        let exp = (id, fx.c(orange), &h(&green), &h(&gray), &h(&blue), fx.c(fixed));
        ensure(got == exp, || format!("issue {id}: {got:?}"))?;
    }
    Ok("3 issues on the 12-commit fixture".into())
}

fn diff_replay() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = build_fixture(tmp.path());
    let repo = GitRepo::open(&fx.dir).map_err(|e| e.to_string())?;
    let (fixture_diffs, _) = common::history::replay_history(&repo, &fx.commits)?;
    let random_dir = tmp.path().join("random");
    let hashes = common::history::random_repo(&random_dir, 11);
    let random = GitRepo::open(&random_dir).map_err(|e| e.to_string())?;
    let (random_diffs, renames) = common::history::replay_history(&random, &hashes)?;
    ensure(renames > 0, || "no renames exercised".into())?;

    let mut rng = StdRng::seed_from_u64(200);
    for layout in 0..200 {
        let elements: Vec<SourceElement> = (0..rng.random_range(0..15))
            .map(|i| {
                let start = rng.random_range(1..200);
                SourceElement {
                    kind: ElementKind::Method,
                    fqn: format!("p.X.m{i}()void"),
                    path: "src/X.java".into(),
                    start_line: start,
                    end_line: start + rng.random_range(0..30),
                    parent_fqn: Some("p.X".into()),
                }
            })
            .collect();
        let lines: BTreeSet<u32> = (0..rng.random_range(0..40)).map(|_| rng.random_range(1..240)).collect();
        let brute: BTreeSet<String> = elements
            .iter()
            .filter(|e| lines.iter().any(|&l| e.start_line <= l && l <= e.end_line))
            .map(|e| e.fqn.clone())
            .collect();
        let got = elements_touched(&LineRangeSet::from_lines(lines.iter().copied()), &elements);
        ensure(got == brute, || format!("layout {layout}: {got:?} vs {brute:?}"))?;
    }
    Ok(format!(
        "{fixture_diffs} fixture + {random_diffs} random-history file diffs replayed, 200 layouts"
    ))
}

fn dataset_construction() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = build_fixture(tmp.path());
    let out = tmp.path().join("out");
    run_pipeline(&fixture_config(&fx, &out), None).map_err(|e| e.to_string())?;
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for name in ["method.csv", "class.csv", "file.csv", "method-p.csv"] {
        let got = std::fs::read(out.join("dataset/full").join(name)).map_err(|e| e.to_string())?;
        let want = std::fs::read_to_string(golden.join(name)).map_err(|e| e.to_string())?;
        let want = (1..=12).fold(want, |w, n| w.replace(&format!("{{C{n}}}"), fx.c(n)));
        ensure(got == want.as_bytes(), || format!("{name} differs from golden"))?;
    }
    let rows = read_csv(&out.join("dataset/full/method.csv"), ElementKind::Method).map_err(|e| e.to_string())?;
    let count = |n: usize, fqn: &str| {
        rows.iter()
            .find(|r| r.commit_hash == fx.c(n) && r.fqn == fqn)
            .map(|r| r.bug_count)
    };
    let foo = "p.A.foo(String)int";
    ensure(matches!(count(4, foo), Some(c) if c >= 1) && count(5, foo) == Some(0), || "isolated pair for foo".into())?;
    let baz = "p.B.baz(int[])int";
    ensure(matches!(count(6, baz), Some(c) if c >= 1) && count(9, baz) == Some(0), || "isolated pair for baz".into())?;
    let bar = "p.B.bar(int,int)long";
    ensure(count(9, bar) == Some(1), || format!("overlapping fixed entry has {:?}", count(9, bar)))?;
    ensure(count(10, bar) == Some(0), || "bar after the last fix".into())?;
    Ok("4 golden CSVs byte-identical, overlap count 1 on fixed entry".into())
}

fn metric_identities() -> Outcome {
    let mut methods = 0;
    for seed in 0..500 {
        let seen = catch_unwind(|| common::javagen::check_program(seed, 0)).map_err(|p| panic_text(&p))?;
        methods += seen.len();
    }
    Ok(format!("500 generated files, {methods} methods, rel 1e-9"))
}

fn evaluation_formulas() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    for _ in 0..100 {
        let m = ConfusionMatrix {
            tp: rng.random_range(0..100),
            fp: rng.random_range(0..100),
            tn: rng.random_range(0..100),
            fn_: rng.random_range(0..100),
        };
        let (tp, fp, fn_) = (m.tp as f64, m.fp as f64, m.fn_ as f64);
        let p = if m.tp + m.fp == 0 { 0.0 } else { tp / (tp + fp) };
        let r = if m.tp + m.fn_ == 0 { 0.0 } else { tp / (tp + fn_) };
        let f = if m.tp == 0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        let got = prf(&m);
        let err = (got.precision - p).abs().max((got.recall - r).abs()).max((got.f_measure - f).abs());
        ensure(err <= 1e-12, || format!("{m:?}: error {err:e}"))?;
    }

    // Balanced data, folds of equal class counts; the two constant
    // classifiers pooled into one matrix.
    let set = LabeledSet {
        columns: vec!["x".into()],
        instances: (0..100)
            .map(|i| LabeledInstance {
                features: vec![i as f64],
                buggy: i % 2 == 0,
                commit: "c".into(),
                fqn: format!("m{i}"),
                parent_fqn: None,
            })
            .collect(),
    };
    let cfg = CvConfig { folds: 10, ..Default::default() };
    let mut pooled = ConfusionMatrix::default();
    for b in [true, false] {
        let r = cross_validate(Algorithm::Constant(b), &set, "method", &cfg).map_err(|e| e.to_string())?;
        ensure(r.per_fold.iter().all(|m| m.total() == 10), || "asymmetric folds".into())?;
        pooled = pooled + r.matrix;
    }
    let p = prf(&pooled);
    ensure(p.precision == 0.5 && p.recall == 0.5 && p.f_measure == 0.5, || format!("constant: {p:?}"))?;

    let corpus: Vec<LabeledInstance> = (0..60)
        .map(|i| LabeledInstance {
            features: vec![i as f64],
            buggy: i < 10,
            commit: "c".into(),
            fqn: format!("m{i}"),
            parent_fqn: None,
        })
        .collect();
    let kept = undersample(&corpus, 7).map_err(|e| e.to_string())?;
    let b = kept.iter().filter(|i| i.buggy).count();
    ensure((b, kept.len() - b) == (10, 10), || format!("10/50 undersampled to {b}/{}", kept.len() - b))?;
    Ok("100 matrices within 1e-12, pooled constant P=R=F=0.5, 10/50 -> 10/10".into())
}

fn projection() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    for case in 0..100 {
        let classes = rng.random_range(1..=100);
        let mut preds = Vec::new();
        let mut want = ConfusionMatrix::default();
        for k in 0..classes {
            let methods = rng.random_range(1..=10);
            let commit = format!("c{}", rng.random_range(0..3));
            let rows: Vec<(bool, bool)> = (0..methods).map(|_| (rng.random_bool(0.3), rng.random_bool(0.3))).collect();
            let mut any_p = false;
            let mut any_a = false;
            for (i, &(p, a)) in rows.iter().enumerate() {
                any_p |= p;
                any_a |= a;
                preds.push(MethodPrediction {
                    commit: commit.clone(),
                    fqn: format!("K{k}.m{i}()"),
                    parent_fqn: format!("K{k}"),
                    predicted: p,
                    actual: a,
                });
            }
            want.record(any_p, any_a);
        }
        preds.shuffle(&mut rng);
        let got = project_to_class(&preds);
        ensure(got == want, || format!("case {case}: {got:?} vs {want:?}"))?;
    }
    Ok("100 random fixtures, exact".into())
}

#[derive(Deserialize)]
struct FriedmanCase {
    rows: Vec<Vec<f64>>,
    statistic: f64,
    p: f64,
    nemenyi_p: Vec<(usize, usize, f64)>,
}

#[derive(Deserialize)]
struct WilcoxonCase {
    a: Vec<f64>,
    b: Vec<f64>,
    abs_z: f64,
    p: f64,
}

#[derive(Deserialize)]
struct Cases {
    friedman: Vec<FriedmanCase>,
    wilcoxon: Vec<WilcoxonCase>,
}

fn statistics() -> Outcome {
    let cases: Cases = serde_json::from_str(include_str!("oracle/stats_cases.json")).map_err(|e| e.to_string())?;
    let mut worst = BTreeMap::new();
    let mut note = |name: &'static str, err: f64| {
        let w = worst.entry(name).or_insert(0.0f64);
        *w = w.max(err);
    };
    for c in cases.friedman.iter().take(50) {
        let m = PairedSampleMatrix::new(c.rows.clone()).map_err(|e| e.to_string())?;
        let f = friedman(&m);
        note("friedman", (f.statistic - c.statistic).abs() / c.statistic.max(1.0));
        note("friedman", (f.p_value - c.p).abs());
        let nm = nemenyi(&m, 0.05).map_err(|e| e.to_string())?;
        for &(a, b, p) in &c.nemenyi_p {
            note("nemenyi", (nm.p_exact[a][b] - p).abs());
        }
    }
    for c in cases.wilcoxon.iter().take(50) {
        let w = wilcoxon_signed_rank(&c.a, &c.b).map_err(|e| e.to_string())?;
        note("wilcoxon", (w.z.abs() - c.abs_z).abs().max((w.p - c.p).abs()));
    }
    let summary = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    ensure(worst.values().all(|&e| e <= 1e-6), || format!("oracle error above 1e-6: {summary}"))?;

    let q = q_critical(5, 0.05).map_err(|e| e.to_string())?;
    ensure(format!("{q:.1}") == "3.9", || format!("q_crit(5, 0.05) = {q}"))?;
    let r = effect_size_r(10.9, 353).map_err(|e| e.to_string())?.r;
    ensure(format!("{r:.2}") == "0.58", || format!("r = {r}"))?;
    let rates: Vec<String> = [(167_708, 109_244), (27_216, 66_092), (16_235, 49_868)]
        .iter()
        .map(|&(t, b)| rate(t, b).map(|x| format!("{x:.2}")).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    ensure(rates == ["1.54", "0.41", "0.33"], || format!("rates {rates:?}"))?;
    Ok(format!("max error {summary}; q_crit {q:.3}, r {r:.4}, rates {}", rates.join("/")))
}

/// Methods grouped into classes of one to four; buggy methods have the
/// first three of eight features shifted by two standard deviations.
fn planted(seed: u64, shuffle: bool) -> LabeledSet {
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut instances = Vec::new();
    let mut class = 0;
    while instances.len() < 800 {
        for m in 0..rng.random_range(1..=4) {
            let buggy = rng.random_bool(0.5);
            let features = (0..8)
                .map(|j| normal.sample(&mut rng) + if buggy && j < 3 { 2.0 } else { 0.0 })
                .collect();
            instances.push(LabeledInstance {
                features,
                buggy,
                commit: format!("c{}", class % 5),
                fqn: format!("p.K{class}.m{m}()void"),
                parent_fqn: Some(format!("p.K{class}")),
            });
        }
        class += 1;
    }
    if shuffle {
        let mut labels: Vec<bool> = instances.iter().map(|i| i.buggy).collect();
        labels.shuffle(&mut rng);
        for (inst, l) in instances.iter_mut().zip(labels) {
            inst.buggy = l;
        }
    }
    LabeledSet {
        columns: (0..8).map(|j| format!("f{j}")).collect(),
        instances,
    }
}

fn synthetic_learning() -> Outcome {
    let cfg = CvConfig {
        folds: 10,
        seed: 42,
        ..Default::default()
    };
    let signal = planted(9, false);
    let forest = cross_validate(Algorithm::RandomForest, &signal, "method", &cfg).map_err(|e| e.to_string())?;
    let projected = project_result(&forest, &signal);
    ensure(forest.f_measure >= 0.80, || format!("random_forest F {:.4}", forest.f_measure))?;
    ensure(projected.f_measure >= forest.f_measure - 0.05, || {
        format!("projected F {:.4} vs method {:.4}", projected.f_measure, forest.f_measure)
    })?;
    let noise = planted(9, true);
    let mut shuffled = Vec::new();
    for algo in Algorithm::BUILTIN {
        let r = cross_validate(algo, &noise, "method", &cfg).map_err(|e| e.to_string())?;
        ensure((0.40..=0.60).contains(&r.f_measure), || format!("{algo} on shuffled labels: F {:.4}", r.f_measure))?;
        shuffled.push(format!("{:.2}", r.f_measure));
    }
    Ok(format!(
        "forest F {:.4}, projected {:.4}, shuffled [{}]",
        forest.f_measure,
        projected.f_measure,
        shuffled.join(" ")
    ))
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = build_fixture(tmp.path());
    let runs: Vec<BTreeMap<String, Vec<u8>>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = tmp.path().join(name);
            let cfg = PipelineConfig {
                algorithms: Algorithm::BUILTIN.to_vec(),
                ..fixture_config(&fx, &out)
            };
            run_pipeline(&cfg, None).map(|_| tree(&out)).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let (a, b) = (&runs[0], &runs[1]);
    let names: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let differing: Vec<&String> = names.into_iter().filter(|k| a.get(*k) != b.get(*k)).collect();
    ensure(differing.is_empty(), || format!("differing artifacts: {differing:?}"))?;
    Ok(format!("{} artifacts byte-identical", a.len()))
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("filter semantics", 1, filter_semantics),
        ("timeline classification", 5, timeline_classification),
        ("diff replay soundness", 10, diff_replay),
        ("dataset construction", 30, dataset_construction),
        ("metric identities", 10, metric_identities),
        ("evaluation formulas", 10, evaluation_formulas),
        ("projection", 10, projection),
        ("statistics", 10, statistics),
        ("synthetic learning", 60, synthetic_learning),
        ("determinism", 60, determinism),
    ];
    // Failed criteria are reported on their own line; keep panics quiet.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| Err(panic_text(&p)));
        let took = start.elapsed();
        let outcome = outcome.and_then(|d| {
            if took <= Duration::from_secs(*limit) {
                Ok(d)
            } else {
                Err(format!("{d}; too slow"))
            }
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(e) => ("FAIL", e),
        };
        println!("{tag} {:>2} {name}: {detail} [{:.2}s, limit {limit}s]", i + 1, took.as_secs_f64());
        failed += outcome.is_err() as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
