//! On-disk fixtures for end-to-end runs built from a [`Planted`] corpus.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::{rng, unit_gaussian, Planted};

pub fn user_id(u: usize) -> String {
    format!("u{u}")
}

pub fn item_id(i: usize) -> String {
    format!("i{i}")
}

/// Writes `ratings.tsv` with one event per line in generation order and
/// increasing timestamps.
pub fn write_ratings(dir: &Path, p: &Planted) -> PathBuf {
    let mut text = String::new();
    for (t, &(u, i)) in p.events.iter().enumerate() {
        writeln!(text, "{}\t{}\t1\t{}", user_id(u), item_id(i), 1_000 + t).unwrap();
    }
    let path = dir.join("ratings.tsv");
    fs::write(&path, text).unwrap();
    path
}

pub fn write_table(path: &Path, rows: &[Vec<f64>]) {
    let mut text = String::new();
    for (i, row) in rows.iter().enumerate() {
        text.push_str(&item_id(i));
        for v in row {
            write!(text, "\t{v:?}").unwrap();
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// Writes the planted features as the text table and an independent noise
/// table of width `noise_dim` as the audio table.
pub fn write_embeddings(dir: &Path, p: &Planted, noise_dim: usize, seed: u64) {
    write_table(&dir.join("text.tsv"), &p.features);
    let mut r = rng(seed ^ 0x5eed);
    let noise: Vec<Vec<f64>> = (0..p.n_items)
        .map(|_| {
            let mut v = unit_gaussian(&mut r, noise_dim);
            v.iter_mut().for_each(|x| *x *= r.random_range(0.5..1.5));
            v
        })
        .collect();
    write_table(&dir.join("audio.tsv"), &noise);
}

/// Item metadata with one or two genres drawn from the sign of the first
/// feature coordinates.
pub fn write_metadata(dir: &Path, p: &Planted) -> PathBuf {
    let mut text = String::new();
    for (i, f) in p.features.iter().enumerate() {
        let mut genres = vec![if f[0] > 0.0 { "Drama" } else { "Comedy" }];
        if f[1] > 0.5 {
            genres.push("Sci-Fi");
        }
        writeln!(text, "{}\tTitle {i}\t{}\tsynthetic|batch{}", item_id(i), genres.join("|"), i % 3).unwrap();
    }
    let path = dir.join("items.tsv");
    fs::write(&path, text).unwrap();
    path
}

/// A planted corpus with ratings, metadata and both tables written to `dir`.
pub fn write_fixture(dir: &Path, p: &Planted, seed: u64) {
    write_ratings(dir, p);
    write_metadata(dir, p);
    write_embeddings(dir, p, 6, seed);
}
