#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mfmnet::data::{write_pgm, GrayImage};
use mfmnet::synthetic::{toy_identities, ToySpec};

pub fn mfmnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfmnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp paths")
}

/// Writes the synthetic identities as `root/idNNN/KKKK.pgm` and returns the
/// relative image paths in write order.
pub fn write_toy_dataset(root: &Path, spec: &ToySpec) -> Vec<String> {
    let ds = toy_identities(spec);
    let mut counters = vec![0usize; ds.num_identities];
    let mut paths = Vec::with_capacity(ds.len());
    for (image, &label) in ds.images.iter().zip(&ds.labels) {
        let rel = format!("id{label:03}/{:04}.pgm", counters[label]);
        counters[label] += 1;
        let path = root.join(&rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        write_pgm(&path, &GrayImage::from_tensor(image).unwrap()).unwrap();
        paths.push(rel);
    }
    paths
}

/// `key=value` from whitespace- or newline-separated stdout.
pub fn field(out: &str, key: &str) -> Option<String> {
    out.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .map(String::from)
}
