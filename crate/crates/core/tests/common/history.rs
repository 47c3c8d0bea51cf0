//! Random linear histories exercising renames, deletions, binary files,
//! CRLF lines and missing final newlines.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use fixstate::diff::Side;
use fixstate::git::{FileTree, GitRepo};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{git, git_env};

const NAMES: [&str; 8] = [
    "src/A.java",
    "src/B.java",
    "src/deep/nested/C.java",
    "src/test/T.java",
    "README",
    "docs/notes.txt",
    "with space.txt",
    "bin/blob.dat",
];

fn random_text(rng: &mut StdRng) -> String {
    let n = rng.random_range(0..30);
    let mut s: String = (0..n)
        .map(|_| match rng.random_range(0..7) {
            6 => "windows line\r\n".to_string(),
            0 => "\n".to_string(),
            1 => "    return x;\n".to_string(),
            2 => "}\n".to_string(),
            3 => format!("int v{} = {};\n", rng.random_range(0..5), rng.random_range(0..100)),
            4 => "// note\n".to_string(),
            _ => "héllo wörld\n".to_string(),
        })
        .collect();
    if rng.random_bool(0.2) {
        s.push_str("tail without newline");
    }
    s
}

fn edit(rng: &mut StdRng, old: &str) -> String {
    let mut lines: Vec<String> = old.split_inclusive('\n').map(str::to_string).collect();
    for _ in 0..rng.random_range(1..4) {
        let at = rng.random_range(0..=lines.len());
        match rng.random_range(0..3) {
            0 => lines.insert(at, format!("added {}\n", rng.random_range(0..1000))),
            1 if at < lines.len() => {
                lines.remove(at);
            }
            _ if at < lines.len() => lines[at] = format!("changed {}\n", rng.random_range(0..1000)),
            _ => lines.push("appended\n".into()),
        }
    }
    let mut s: String = lines.concat();
    if rng.random_bool(0.1) && s.ends_with('\n') {
        s.pop();
    }
    s
}

/// A linear history of 100 random commits. Returns the hashes.
pub fn random_repo(dir: &Path, seed: u64) -> Vec<String> {
    let mut rng = StdRng::seed_from_u64(seed);
    std::fs::create_dir_all(dir).unwrap();
    git(dir, &["init", "-q", "-b", "main"]);
    let mut live: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut hashes = Vec::new();
    for i in 0..100 {
        let ops = rng.random_range(1..4);
        for _ in 0..ops {
            let name = NAMES[rng.random_range(0..NAMES.len())].to_string();
            let p = dir.join(&name);
            if name.ends_with(".dat") {
                let bytes: Vec<u8> = (0..rng.random_range(1..64)).map(|_| rng.random()).collect();
                std::fs::create_dir_all(p.parent().unwrap()).unwrap();
                std::fs::write(&p, &bytes).unwrap();
                live.insert(name, bytes);
                continue;
            }
            match (live.get(&name), rng.random_range(0..10)) {
                (Some(_), 0) => {
                    std::fs::remove_file(&p).unwrap();
                    live.remove(&name);
                }
                (Some(old), 1) => {
                    let target = format!("src/moved{}.java", rng.random_range(0..3));
                    if live.contains_key(&target) {
                        continue;
                    }
                    let text = old.clone();
                    std::fs::remove_file(&p).unwrap();
                    let q = dir.join(&target);
                    std::fs::create_dir_all(q.parent().unwrap()).unwrap();
                    std::fs::write(&q, &text).unwrap();
                    live.remove(&name);
                    live.insert(target, text);
                }
                (Some(old), _) => {
                    let text = edit(&mut rng, &String::from_utf8_lossy(old)).into_bytes();
                    std::fs::write(&p, &text).unwrap();
                    live.insert(name, text);
                }
                (None, _) => {
                    let text = random_text(&mut rng).into_bytes();
                    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
                    std::fs::write(&p, &text).unwrap();
                    live.insert(name, text);
                }
            }
        }
        git(dir, &["add", "-A"]);
        let date = format!("2021-03-01T00:{:02}:{:02}+0000", i / 60, i % 60);
        git_env(dir, &["commit", "-q", "--allow-empty", "-m", &format!("change {i}")], Some(&date));
        hashes.push(git(dir, &["rev-parse", "HEAD"]).trim().to_string());
    }
    hashes
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            walk(root, &p, out);
        } else {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, std::fs::read(&p).unwrap());
        }
    }
}

/// Files of a commit as produced by `git archive`.
pub fn archive(repo: &Path, hash: &str, scratch: &Path) -> BTreeMap<String, Vec<u8>> {
    let dest = scratch.join(hash);
    std::fs::create_dir_all(&dest).unwrap();
    let tar = Command::new("git")
        .current_dir(repo)
        .args(["archive", "--format=tar", hash])
        .output()
        .unwrap();
    assert!(tar.status.success());
    let mut child = Command::new("tar")
        .args(["-x", "-C"])
        .arg(&dest)
        .stdin(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(&tar.stdout).unwrap();
    assert!(child.wait().unwrap().success());
    let mut files = BTreeMap::new();
    walk(&dest, &dest, &mut files);
    std::fs::remove_dir_all(&dest).unwrap();
    files
}

/// Replays every text diff of a linear history against the checkouts on
/// both sides. Returns the number of file diffs and renames seen.
pub fn replay_history(repo: &GitRepo, hashes: &[String]) -> Result<(usize, usize), String> {
    let mut replayed = 0;
    let mut renames = 0;
    let text = |tree: &FileTree, p: &str| String::from_utf8_lossy(&tree.files[p]).into_owned();
    let mut prev = repo.checkout(&hashes[0], None).map_err(|e| e.to_string())?;
    for pair in hashes.windows(2) {
        let next = repo.checkout(&pair[1], None).map_err(|e| e.to_string())?;
        for d in repo.commit_diff(&pair[1], Some(&pair[0])).map_err(|e| e.to_string())? {
            if d.binary {
                continue;
            }
            let old = d.path(Side::Old).map_or(String::new(), |p| text(&prev, p));
            let new = d.path(Side::New).map_or(String::new(), |p| text(&next, p));
            if !d.hunks.iter().all(|h| h.is_consistent()) {
                return Err(format!("{}: inconsistent hunk header", d.new_path));
            }
            if d.apply(&old).map_err(|e| e.to_string())? != new {
                return Err(format!("{} -> {} at {} does not replay", d.old_path, d.new_path, pair[1]));
            }
            replayed += 1;
            renames += d.is_rename() as usize;
        }
        prev = next;
    }
    Ok((replayed, renames))
}
