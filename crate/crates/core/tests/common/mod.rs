#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rfpca::simulate::{gen_sample, ModelKind, SimModel};
use rfpca::FunctionalSample;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rfpca"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn write_sample(path: &Path, data: &FunctionalSample) {
    let mut out = String::new();
    let header: Vec<String> = data.grid().points().iter().map(|t| format!("{t:.16e}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for c in data.curves() {
        let row: Vec<String> = c.values().iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// Writes a C0 sample of `n` curves on the default 50-point grid.
pub fn write_c0(path: &Path, n: usize, seed: u64) -> FunctionalSample {
    let data = gen_sample(&SimModel::new(ModelKind::C0).with_n(n).with_seed(seed)).unwrap();
    write_sample(path, &data);
    data
}
