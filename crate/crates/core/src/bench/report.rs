use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_error, read_results, ResultRow, Result};
use crate::metrics::{tradeoff_auc, MetricError};

/// Area under one model's accuracy-versus-`x_metric` curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub model: String,
    pub x_metric: String,
    pub n_points: usize,
    /// Absent when the points do not span two distinct x values.
    pub auc: Option<f64>,
}

fn find_results(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_error(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_error(dir)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_results(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "results.csv") {
            out.push(p);
        }
    }
    Ok(())
}

/// Every `results.csv` under `dir`, in path order, with its rows.
pub fn collect_results(dir: &Path) -> Result<Vec<(PathBuf, Vec<ResultRow>)>> {
    let mut paths = Vec::new();
    find_results(dir, &mut paths)?;
    paths
        .into_iter()
        .map(|p| {
            let rows = read_results(&p)?;
            Ok((p, rows))
        })
        .collect()
}

/// Groups rows by model and integrates nDCG against `x_metric` within each
/// group.
pub fn tradeoff_report(rows: &[ResultRow], x_metric: &str) -> Result<Vec<TradeoffRow>> {
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry(r.model.as_str()).or_default();
        if let (Some(x), Some(y)) = (r.metric(x_metric), r.ndcg) {
            entry.push((x, y));
        }
    }
    groups
        .into_iter()
        .map(|(model, points)| {
            let auc = match tradeoff_auc(&points) {
                Ok(a) => Some(a),
                Err(MetricError::DegenerateCurve(_)) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(TradeoffRow {
                model: model.to_string(),
                x_metric: x_metric.to_string(),
                n_points: points.len(),
                auc,
            })
        })
        .collect()
}
