use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_error, BenchError, Result};

/// Column set and order of every results file.
pub const RESULT_COLUMNS: [&str; 18] = [
    "model",
    "fusion",
    "stage",
    "text_variant",
    "augmented",
    "audio_variant",
    "visual_variant",
    "seed",
    "k",
    "recall",
    "ndcg",
    "hitrate",
    "coverage",
    "coldrate",
    "novelty",
    "ild",
    "calibration_bias",
    "train_seconds",
];

/// One evaluated system. Absent metrics are written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub fusion: String,
    pub stage: String,
    pub text_variant: String,
    pub augmented: bool,
    pub audio_variant: String,
    pub visual_variant: String,
    pub seed: u64,
    pub k: usize,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub hitrate: Option<f64>,
    pub coverage: Option<f64>,
    pub coldrate: Option<f64>,
    pub novelty: Option<f64>,
    pub ild: Option<f64>,
    pub calibration_bias: Option<f64>,
    pub train_seconds: f64,
}

impl ResultRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "recall" => self.recall,
            "ndcg" => self.ndcg,
            "hitrate" => self.hitrate,
            "coverage" => self.coverage,
            "coldrate" => self.coldrate,
            "novelty" => self.novelty,
            "ild" => self.ild,
            "calibration_bias" => self.calibration_bias,
            _ => None,
        }
    }
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = csv::Writer::from_writer(file);
    let fail = |e: csv::Error| BenchError::Results {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if rows.is_empty() {
        w.write_record(RESULT_COLUMNS).map_err(fail)?;
    }
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.flush().map_err(io_error(path))
}

/// Reads a results file, rejecting any header other than [`RESULT_COLUMNS`].
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let fail = |message: String| BenchError::Results {
        path: path.display().to_string(),
        message,
    };
    let file = File::open(path).map_err(io_error(path))?;
    let mut rd = csv::Reader::from_reader(file);
    let header = rd.headers().map_err(|e| fail(e.to_string()))?.clone();
    if header.iter().ne(RESULT_COLUMNS) {
        return Err(fail(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    rd.deserialize()
        .enumerate()
        .map(|(n, r)| r.map_err(|e| fail(format!("row {}: {e}", n + 1))))
        .collect()
}
