mod common;

use std::path::{Path, PathBuf};

use fixstate::eval::Algorithm;
use fixstate::filter::FilterStrategy;
use fixstate::ingest::load_snapshot;
use fixstate::linker::{build_timelines, BuggyInterval};
use fixstate::pipeline::{run_pipeline, PipelineConfig, StageStatus};

use common::{build_fixture, Fixture};

fn config(fx: &Fixture, out: &Path) -> PipelineConfig {
    PipelineConfig {
        repo: fx.dir.clone(),
        project: Some("fixture".into()),
        issues: Some(fx.issues.clone()),
        output: out.to_path_buf(),
        folds: 2,
        algorithms: vec![Algorithm::OneR, Algorithm::DecisionTree, Algorithm::RandomForest],
        hyper: fixstate::eval::Hyperparameters {
            trees: 10,
            min_bucket: 1,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn timelines_match_hand_classification() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = build_fixture(tmp.path());
    let out = tmp.path().join("out");
    let cfg = PipelineConfig {
        evaluate: false,
        ..config(&fx, &out)
    };
    fixstate::pipeline::run_until(&cfg, None, fixstate::pipeline::StageName::Link).unwrap();
    let snap = load_snapshot(&out.join("snapshot/snapshot.json")).unwrap();
    let ids: Vec<u64> = snap.issues.iter().map(|i| i.id).collect();
    assert_eq!(ids, vec![1, 2, 3, 5]);
    let tl = build_timelines(&snap, BuggyInterval::FromIssueCreation);
    let h = |ns: &[usize]| ns.iter().map(|&n| fx.c(n).to_string()).collect::<Vec<_>>();
    assert_eq!(tl.len(), 3);
    let (t1, t2, t3) = (&tl[0], &tl[1], &tl[2]);
    assert_eq!((t1.orange.as_str(), &t1.green, &t1.gray, &t1.blue), (fx.c(4), &h(&[5]), &h(&[]), &h(&[4])));
    assert_eq!((t2.orange.as_str(), &t2.green, &t2.gray, &t2.blue), (fx.c(6), &h(&[7, 9]), &h(&[8]), &h(&[6])));
    assert_eq!((t3.orange.as_str(), &t3.green, &t3.gray, &t3.blue), (fx.c(9), &h(&[10]), &h(&[]), &h(&[7, 8, 9])));
    assert_eq!((t1.fixed.as_str(), t2.fixed.as_str(), t3.fixed.as_str()), (fx.c(5), fx.c(9), fx.c(10)));
    let plan = std::fs::read_to_string(out.join("plan.txt")).unwrap();
    let expected = [(4, "full"), (5, "full"), (6, "full"), (7, "pos"), (9, "full"), (10, "full")]
        .iter()
        .map(|(n, k)| format!("{} {k}\n", fx.c(*n)))
        .collect::<String>();
    assert_eq!(plan, expected);
}

#[test]
fn end_to_end_matches_golden_and_reruns_cached() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = build_fixture(tmp.path());
    let out = tmp.path().join("out");
    let cfg = config(&fx, &out);
    let first = run_pipeline(&cfg, None).unwrap();
    assert!(first.stages.iter().all(|(_, s)| *s == StageStatus::Ran));
    assert_eq!(first.stages.len(), 7);

    let full = out.join("dataset/full");
    for name in ["file.csv", "class.csv", "method.csv", "method-p.csv"] {
        let got = std::fs::read_to_string(full.join(name)).unwrap();
        if std::env::var_os("FIXSTATE_BLESS").is_some() {
            let blessed = (1..=12).fold(got.clone(), |g, n| g.replace(fx.c(n), &format!("{{C{n}}}")));
            std::fs::create_dir_all(golden("")).unwrap();
            std::fs::write(golden(name), blessed).unwrap();
        }
        let want = std::fs::read_to_string(golden(name)).unwrap();
        let want = (1..=12).fold(want, |w, n| w.replace(&format!("{{C{n}}}"), fx.c(n)));
        assert_eq!(got, want, "{name}");
    }

    let paths: Vec<&str> = first.manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
    for s in FilterStrategy::ALL {
        for f in ["file.csv", "class.csv", "method.csv", "method-p.csv"] {
            let p = format!("dataset/{}/{f}", s.dir_name());
            assert!(paths.contains(&p.as_str()), "{p} missing from manifest");
        }
    }
    for p in [
        "snapshot/snapshot.json",
        "timelines.json",
        "plan.txt",
        "dataset/full/drop_log.csv",
        "eval/results.csv",
        "eval/results.txt",
        "stats/filters.txt",
        "stats/projection.txt",
    ] {
        assert!(paths.contains(&p), "{p} missing from manifest");
    }
    assert!(paths.iter().any(|p| p.starts_with("analysis/")));

    let second = run_pipeline(&cfg, None).unwrap();
    assert!(second.stages.iter().all(|(_, s)| *s == StageStatus::Cached), "{:?}", second.stages);
    assert_eq!(first.manifest, second.manifest);

    // A changed seed reruns filtering and everything after it.
    let third = run_pipeline(&PipelineConfig { seed: 9, ..cfg.clone() }, None).unwrap();
    let ran: Vec<&str> = third.stages.iter().filter(|(_, s)| *s == StageStatus::Ran).map(|(n, _)| *n).collect();
    assert_eq!(ran, vec!["filter", "evaluate", "stats"]);

    let results = fixstate::eval::read_results_csv(&out.join("eval/results.csv")).unwrap();
    assert!(results.iter().any(|r| r.level == "projected"));
    assert!(results.iter().all(|r| r.tp + r.fp + r.tn + r.fn_ > 0));
}

#[test]
fn overlapping_bug_leaves_count_on_fixed_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = build_fixture(tmp.path());
    let out = tmp.path().join("out");
    let cfg = PipelineConfig {
        evaluate: false,
        ..config(&fx, &out)
    };
    fixstate::pipeline::run_until(&cfg, None, fixstate::pipeline::StageName::Build).unwrap();
    let rows = fixstate::dataset::read_csv(&out.join("dataset/full/method.csv"), fixstate::java::ElementKind::Method).unwrap();
    let count = |n: usize, fqn: &str| {
        rows.iter()
            .find(|r| r.commit_hash == fx.c(n) && r.fqn == fqn)
            .map(|r| r.bug_count)
    };
    // Isolated bug: buggy before the fix, clean after it.
    assert_eq!(count(4, "p.A.foo(String)int"), Some(1));
    assert_eq!(count(5, "p.A.foo(String)int"), Some(0));
    // bar is fixed for #2 at commit 9 while #3 is still open on it.
    assert_eq!(count(9, "p.B.bar(int,int)long"), Some(1));
    assert_eq!(count(9, "p.B.baz(int[])int"), Some(0));
    assert_eq!(count(10, "p.B.bar(int,int)long"), Some(0));
    // Test sources are excluded.
    assert!(rows.iter().all(|r| !r.fqn.contains("ATest")));
}
