//! Deterministic fixture repository shared by the integration tests.
//!
//! Twelve commits on `main`, one per day from 2020-01-01 at noon UTC:
//!
//! | # | message                                   | change           |
//! |---|-------------------------------------------|------------------|
//! | 1 | Initial import                            | A.foo, B.bar/baz |
//! | 2 | Add greeter                               | C.qux            |
//! | 3 | Reword greeting                           | C.qux            |
//! | 4 | Add C.extra                               | C.extra          |
//! | 5 | Guard against null in foo, fixes #1       | A.foo            |
//! | 6 | Add A.other                               | A.other          |
//! | 7 | Fix overflow in bar (fixes #2)            | B.bar            |
//! | 8 | Trim names                                | C.qux            |
//! | 9 | Handle empty input in baz (#2)            | B.baz            |
//! |10 | Round bar results, closes #3              | B.bar            |
//! |11 | Tidy other, see #4                        | A.other          |
//! |12 | Document greeter                          | C (comment)      |
//!
//! Issues: #1 bug, created day 3 18:00, closed day 5; #2 bug, created day
//! 5 18:00, closed day 9; #3 bug, created day 6 18:00, closed day 10; #4
//! enhancement (not a bug); #5 open bug.
#![allow(dead_code)]

pub mod history;
pub mod javagen;

use std::path::{Path, PathBuf};
use std::process::Command;

pub const A1: &str = "package p;

public class A {
    private int count;

    public int foo(String s) {
        return s.length();
    }
}
";

pub const A2: &str = "package p;

public class A {
    private int count;

    public int foo(String s) {
        if (s == null) {
            return 0;
        }
        return s.length();
    }
}
";

pub const A3: &str = "package p;

public class A {
    private int count;

    public int foo(String s) {
        if (s == null) {
            return 0;
        }
        return s.length();
    }

    public void other() {
        count++;
    }
}
";

pub const A4: &str = "package p;

public class A {
    private int count;

    public int foo(String s) {
        if (s == null) {
            return 0;
        }
        return s.length();
    }

    public void other() {
        // two steps at a time
        count += 2;
    }
}
";

pub const B1: &str = "package p;

/** Arithmetic helpers. */
public class B {
    public long bar(int a, int b) {
        return a * b;
    }

    public int baz(int[] xs) {
        int sum = 0;
        for (int x : xs) {
            sum += x;
        }
        return sum / xs.length;
    }
}
";

pub const B2: &str = "package p;

/** Arithmetic helpers. */
public class B {
    public long bar(int a, int b) {
        return (long) a * b;
    }

    public int baz(int[] xs) {
        int sum = 0;
        for (int x : xs) {
            sum += x;
        }
        return sum / xs.length;
    }
}
";

pub const B3: &str = "package p;

/** Arithmetic helpers. */
public class B {
    public long bar(int a, int b) {
        return (long) a * b;
    }

    public int baz(int[] xs) {
        if (xs.length == 0) {
            return 0;
        }
        int sum = 0;
        for (int x : xs) {
            sum += x;
        }
        return sum / xs.length;
    }
}
";

pub const B4: &str = "package p;

/** Arithmetic helpers. */
public class B {
    public long bar(int a, int b) {
        long r = (long) a * b;
        return Math.round(r / 1.0);
    }

    public int baz(int[] xs) {
        if (xs.length == 0) {
            return 0;
        }
        int sum = 0;
        for (int x : xs) {
            sum += x;
        }
        return sum / xs.length;
    }
}
";

pub const C1: &str = "package p;

public class C {
    public String qux(String name) {
        return \"hi \" + name;
    }
}
";

pub const C2: &str = "package p;

public class C {
    public String qux(String name) {
        return \"hello \" + name;
    }
}
";

pub const C3: &str = "package p;

public class C {
    public String qux(String name) {
        return \"hello \" + name;
    }

    public int extra() {
        return 42;
    }
}
";

pub const C4: &str = "package p;

public class C {
    public String qux(String name) {
        return \"hello, \" + name.trim();
    }

    public int extra() {
        return 42;
    }
}
";

pub const C5: &str = "package p;

/**
 * Greets people.
 */
public class C {
    public String qux(String name) {
        return \"hello, \" + name.trim();
    }

    public int extra() {
        return 42;
    }
}
";

pub const A_TEST: &str = "package p;

class ATest {
    void testFoo() {
        new A().foo(\"x\");
    }
}
";

const A: &str = "src/main/java/p/A.java";
const B: &str = "src/main/java/p/B.java";
const C: &str = "src/main/java/p/C.java";
const T: &str = "src/test/java/p/ATest.java";

/// File contents written by each commit, then its message.
pub fn plan() -> Vec<(Vec<(&'static str, &'static str)>, &'static str)> {
    vec![
        (vec![(A, A1), (B, B1), (T, A_TEST)], "Initial import"),
        (vec![(C, C1)], "Add greeter"),
        (vec![(C, C2)], "Reword greeting"),
        (vec![(C, C3)], "Add C.extra"),
        (vec![(A, A2)], "Guard against null in foo, fixes #1"),
        (vec![(A, A3)], "Add A.other"),
        (vec![(B, B2)], "Fix overflow in bar (fixes #2)"),
        (vec![(C, C4)], "Trim names"),
        (vec![(B, B3)], "Handle empty input in baz (#2)"),
        (vec![(B, B4)], "Round bar results, closes #3"),
        (vec![(A, A4)], "Tidy other, see #4"),
        (vec![(C, C5)], "Document greeter"),
    ]
}

pub const ISSUES_JSON: &str = r#"[
  {"id": 1, "state": "closed", "created_at": "2020-01-03T18:00:00Z", "closed_at": "2020-01-05T13:00:00Z", "labels": ["bug"]},
  {"id": 2, "state": "closed", "created_at": "2020-01-05T18:00:00Z", "closed_at": "2020-01-09T13:00:00Z", "labels": ["Bug", "core"]},
  {"id": 3, "state": "closed", "created_at": "2020-01-06T18:00:00Z", "closed_at": "2020-01-10T13:00:00Z", "labels": ["bug"]},
  {"id": 4, "state": "closed", "created_at": "2020-01-10T18:00:00Z", "closed_at": "2020-01-11T13:00:00Z", "labels": ["enhancement"]},
  {"id": 5, "state": "open", "created_at": "2020-01-11T18:00:00Z", "labels": ["bug"]}
]
"#;

pub struct Fixture {
    pub dir: PathBuf,
    /// Commit hashes in order, index 0 = commit 1.
    pub commits: Vec<String>,
    pub issues: PathBuf,
}

impl Fixture {
    /// Hash of commit `n`, counting from 1.
    pub fn c(&self, n: usize) -> &str {
        &self.commits[n - 1]
    }
}

pub fn git(dir: &Path, args: &[&str]) -> String {
    git_env(dir, args, None)
}

pub fn git_env(dir: &Path, args: &[&str], date: Option<&str>) -> String {
    let mut cmd = Command::new("git");
    cmd.current_dir(dir)
        .args(["-c", "commit.gpgsign=false", "-c", "core.autocrlf=false"])
        .args(args)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("HOME", dir)
        .env("GIT_AUTHOR_NAME", "Dana Dev")
        .env("GIT_AUTHOR_EMAIL", "dana@example.org")
        .env("GIT_COMMITTER_NAME", "Dana Dev")
        .env("GIT_COMMITTER_EMAIL", "dana@example.org");
    if let Some(d) = date {
        cmd.env("GIT_AUTHOR_DATE", d).env("GIT_COMMITTER_DATE", d);
    }
    let out = cmd.output().expect("git runs");
    assert!(
        out.status.success(),
        "git {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Creates the fixture repository in `root/repo` and the issues file in
/// `root/issues.json`.
pub fn build_fixture(root: &Path) -> Fixture {
    let dir = root.join("repo");
    std::fs::create_dir_all(&dir).unwrap();
    git(&dir, &["init", "-q", "-b", "main"]);
    let mut commits = Vec::new();
    for (i, (files, msg)) in plan().into_iter().enumerate() {
        for (path, text) in files {
            let p = dir.join(path);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(&p, text).unwrap();
        }
        git(&dir, &["add", "-A"]);
        let date = format!("2020-01-{:02}T12:00:00+0000", i + 1);
        git_env(&dir, &["commit", "-q", "-m", msg], Some(&date));
        commits.push(git(&dir, &["rev-parse", "HEAD"]).trim().to_string());
    }
    let issues = root.join("issues.json");
    std::fs::write(&issues, ISSUES_JSON).unwrap();
    Fixture { dir, commits, issues }
}
