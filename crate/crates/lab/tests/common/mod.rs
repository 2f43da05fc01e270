#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn roadlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_roadlab"))
}

/// Runs the binary with `args` and the worker count pinned to `threads`.
pub fn run(args: &[&str], threads: usize) -> Output {
    roadlab()
        .args(args)
        .env("RC_THREADS", threads.to_string())
        .output()
        .expect("spawn roadlab")
}

pub fn run_ok(args: &[&str], threads: usize) -> Output {
    let out = run(args, threads);
    assert!(
        out.status.success(),
        "roadlab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every file under `root`, keyed by its path relative to `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// First differing file between two run directories, if any.
pub fn first_difference(a: &Path, b: &Path) -> Option<String> {
    let (ta, tb) = (tree(a), tree(b));
    if ta.keys().ne(tb.keys()) {
        return Some(format!("file sets differ: {:?} vs {:?}", ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>()));
    }
    ta.iter().find(|(k, v)| tb[*k] != **v).map(|(k, _)| k.display().to_string())
}

/// Small compact-rig configuration for quick end-to-end runs.
pub fn quick_config(dir: &Path) -> PathBuf {
    let path = dir.join("quick.cfg");
    std::fs::write(
        &path,
        "rig = compact\ntrack.count = 2\ntrack.length = 200\ntrain.max_epochs = 4\ntrain.patience = 2\n\
         study.train_tracks = 2\nstudy.permutations = 1000\n",
    )
    .unwrap();
    path
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
