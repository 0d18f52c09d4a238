//! Synthetic datasets and helpers shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use stabx_core::rng::{sample_without_replacement, seeded, standard_normal};

/// `y = Σ β_j x_j + ε` over the first `betas.len()` of `p` standard-normal features.
pub fn linear_csv(n: usize, p: usize, betas: &[f64], noise_sd: f64, seed: u64) -> String {
    let mut rng = seeded(seed);
    let mut s = String::from("id");
    for j in 0..p {
        write!(s, ",x{j}").unwrap();
    }
    s.push_str(",y\n");
    for i in 0..n {
        let x: Vec<f64> = (0..p).map(|_| standard_normal(&mut rng)).collect();
        let y: f64 = betas.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>() + noise_sd * standard_normal(&mut rng);
        write!(s, "s{i}").unwrap();
        for v in x.iter().chain(std::iter::once(&y)) {
            write!(s, ",{v:?}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// `k` Gaussian blobs on a simplex with a `truth` column. A fraction
/// `outliers` of the samples get one feature replaced by a uniform draw
/// over three times the data range.
pub fn blobs_csv(n: usize, k: usize, p: usize, sd: f64, outliers: f64, seed: u64) -> String {
    let mut rng = seeded(seed);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..p).map(|j| if j == i % k { 10.0 } else { 0.0 } + sd * standard_normal(&mut rng)).collect())
        .collect();
    let m = (outliers * n as f64).round() as usize;
    if m > 0 {
        for j in 0..p {
            let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            for i in sample_without_replacement(n, m, &mut rng) {
                rows[i][j] = rng.random_range(lo - span..hi + span);
            }
        }
    }
    let mut s = String::from("id");
    for j in 0..p {
        write!(s, ",f{j}").unwrap();
    }
    s.push_str(",truth\n");
    for (i, r) in rows.iter().enumerate() {
        write!(s, "b{i}").unwrap();
        for v in r {
            write!(s, ",{v:?}").unwrap();
        }
        writeln!(s, ",c{}", i % k).unwrap();
    }
    s
}

pub fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

pub fn stabx_bin() -> &'static str {
    env!("CARGO_BIN_EXE_stabx")
}

/// Every file under `dir`, relative path and bytes, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
