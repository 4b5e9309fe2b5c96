#![allow(dead_code)]

use std::path::PathBuf;

use ngvas::cli::{parse_file, Model};
use ngvas::ngvas::Ngvas;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Fixture paths in name order.
pub fn fixture_paths() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(fixture_dir())
        .expect("fixtures directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "ngvas"))
        .collect();
    v.sort();
    v
}

pub fn model(name: &str) -> Model {
    parse_file(&fixture_dir().join(format!("{name}.ngvas"))).expect("fixture parses")
}

pub fn fixture(name: &str) -> Ngvas {
    model(name).build(None).expect("fixture builds")
}

/// The default system of every fixture.
pub fn all_fixtures() -> Vec<Ngvas> {
    fixture_paths()
        .iter()
        .map(|p| parse_file(p).and_then(|m| m.build(None)).expect("fixture builds"))
        .collect()
}

/// `n` and all of its descendants, parents first.
pub fn with_descendants(n: &Ngvas) -> Vec<&Ngvas> {
    let mut out = vec![n];
    let mut i = 0;
    while i < out.len() {
        let cur = out[i];
        out.extend(cur.children().map(|(_, c)| c));
        i += 1;
    }
    out
}
