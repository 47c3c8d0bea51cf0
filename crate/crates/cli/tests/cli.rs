#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{build_fixture, Fixture};

fn fixstate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fixstate"))
        .args(args)
        .env_remove("GITHUB_TOKEN")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fixstate(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn golden(fx: &Fixture, name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(name);
    let text = std::fs::read_to_string(path).unwrap();
    (1..=12).fold(text, |t, n| t.replace(&format!("{{C{n}}}"), fx.c(n)))
}

#[test]
fn subcommands_chain_on_the_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = build_fixture(tmp.path());
    let t = |name: &str| -> PathBuf { tmp.path().join(name) };

    let out = ok(&["fetch", "--local", s(&fx.dir), "--issues", s(&fx.issues), "--project", "fixture", "-o", s(&t("snap.json"))]);
    assert!(out.contains("4 issues, 12 commits"), "{out}");

    ok(&["link", "--snapshot", s(&t("snap.json")), "-o", s(&t("link"))]);
    let plan = std::fs::read_to_string(t("link/plan.txt")).unwrap();
    assert_eq!(plan.lines().count(), 6);

    ok(&["build", "--repo", s(&fx.dir), "--snapshot", s(&t("snap.json")), "-o", s(&t("ds"))]);
    for name in ["file.csv", "class.csv", "method.csv", "method-p.csv"] {
        assert_eq!(std::fs::read_to_string(t("ds").join(name)).unwrap(), golden(&fx, name), "{name}");
    }

    ok(&["filter", "--input", s(&t("ds")), "--strategy", "gcf", "-o", s(&t("gcf"))]);
    assert!(t("gcf/method.csv").exists());

    let table = ok(&[
        "evaluate", "--dataset", s(&t("ds")), "--level", "method,projected", "--algo", "one_r,random_forest",
        "--folds", "2", "--trees", "5", "-o", s(&t("results.csv")),
    ]);
    assert!(table.contains("random_forest") && table.contains("projected"), "{table}");
    let rows = fixstate::eval::read_results_csv(&t("results.csv")).unwrap();
    assert_eq!(rows.len(), 4);

    ok(&["stats", s(&t("results.csv")), "-o", s(&t("stats"))]);
    assert!(t("stats/filters.txt").exists() && t("stats/projection.txt").exists());
}

#[test]
fn run_reads_a_config_file_and_caches() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = build_fixture(tmp.path());
    let config = tmp.path().join("fixstate.toml");
    std::fs::write(
        &config,
        "repo = \"repo\"\nissues = \"issues.json\"\nproject = \"fixture\"\noutput = \"out\"\n\
         folds = 2\nalgorithms = [\"one_r\", \"decision_tree\"]\nfilters = [\"none\", \"single\"]\n\n\
         [hyper]\nmin_bucket = 1\n",
    )
    .unwrap();
    let first = ok(&["run", "-c", s(&config)]);
    assert_eq!(first.lines().filter(|l| l.ends_with(" ran")).count(), 7, "{first}");
    let manifest = tmp.path().join("out/manifest.json");
    let before = std::fs::read(&manifest).unwrap();
    let second = ok(&["run", "-c", s(&config)]);
    assert_eq!(second.lines().filter(|l| l.ends_with(" cached")).count(), 7, "{second}");
    assert_eq!(std::fs::read(&manifest).unwrap(), before);

    // Flags override the file.
    let third = ok(&["run", "-c", s(&config), "--seed", "5"]);
    assert!(third.contains("filter    ran") && third.contains("link      cached"), "{third}");
    assert!(fx.dir.join(".git").exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "colour = \"blue\"\n").unwrap();
    assert_eq!(fixstate(&["run", "-c", s(&bad)]).status.code(), Some(2));
    std::fs::write(&bad, "folds = 1\n").unwrap();
    assert_eq!(fixstate(&["run", "-c", s(&bad)]).status.code(), Some(2));
    assert_eq!(fixstate(&["--jobs", "0", "stats", "x.csv"]).status.code(), Some(2));

    let missing = tmp.path().join("missing.json");
    assert_eq!(fixstate(&["link", "--snapshot", s(&missing), "-o", s(tmp.path())]).status.code(), Some(3));
    assert_eq!(fixstate(&["stats", s(&missing)]).status.code(), Some(3));

    let fx = build_fixture(tmp.path());
    let snap = tmp.path().join("snap.json");
    ok(&["fetch", "--local", s(&fx.dir), "--issues", s(&fx.issues), "-o", s(&snap)]);
    let nowhere = tmp.path().join("nowhere");
    let out = fixstate(&["build", "--repo", s(&nowhere), "--snapshot", s(&snap), "-o", s(&tmp.path().join("ds"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
