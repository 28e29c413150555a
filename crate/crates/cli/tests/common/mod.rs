#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_tdvmm");

pub fn matrix_csv(rows: usize, cols: usize, data: &[f64]) -> String {
    let mut s = format!("rows={rows},cols={cols}\n");
    for r in data.chunks(cols) {
        let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.gen_range(lo..=1.0)).collect()
}

/// Writes weight CSVs and a network file into `dir`; `extra` is appended to
/// the network file.
pub fn write_network(dir: &Path, layers: &[(usize, usize, Vec<f64>)], extra: &str) -> PathBuf {
    let mut text = String::from("[clock]\nT_ns = 32.0\ntau_reset_ns = 1.0\ntau_f_ns = 0.5\n\n[circuit]\nC_per_input_pF = 0.04\nV_RESET_V = 0.7\nV_TH_V = 0.5\n\n");
    text.push_str(extra);
    for (k, (r, c, d)) in layers.iter().enumerate() {
        let name = format!("w{}.csv", k + 1);
        std::fs::write(dir.join(&name), matrix_csv(*r, *c, d)).unwrap();
        text.push_str(&format!("\n[[layers]]\nweights = \"{name}\"\n"));
    }
    let path = dir.join("net.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("TDVMM_SEED").output().unwrap()
}

/// Data rows of a report: metadata and the header line dropped.
pub fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
