//! Helpers for driving the binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_workflow-miner"));
    c.env_remove("WORKFLOW_MINER_BASE_URL")
        .env_remove("WORKFLOW_MINER_ENCODER_URL");
    c
}

/// Runs the binary with the offline fixture config in `workdir`.
pub fn miner(workdir: &Path, args: &[&str]) -> Output {
    let config = fixture("offline.toml");
    bin()
        .arg("--config")
        .arg(&config)
        .arg("--workdir")
        .arg(workdir)
        .args(["--seed", "42", "--log-level", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn full_run(workdir: &Path) -> Output {
    let corpus = fixture("corpus_5.jsonl");
    miner(workdir, &["run", "--corpus", corpus.to_str().unwrap()])
}

/// Relative path to contents for every file under `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
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
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
