#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command as Process;

use ssctm_cli::commands::Common;

pub fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn common(cfg: &Path, out: &Path) -> Common {
    Common {
        config: cfg.to_path_buf(),
        out_dir: out.to_path_buf(),
        seed: None,
        threads: None,
    }
}

/// Runs the binary and returns its exit code.
pub fn run(args: &[&str]) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_ssctm"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

/// Every output file except the manifest, whose runtime field varies.
pub fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|x| x.unwrap().iter().map(String::from).collect()));
    rows
}
