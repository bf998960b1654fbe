//! Tab-separated ranked-list files: `user_id  item_id  rank  score`, one
//! row per recommended item, no header.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use super::{aggregate, AggregationRule, FusionInput, LateFusionError, MissingRank, Result};
use crate::ids::compare_ids;

#[derive(Debug, Clone, PartialEq)]
pub struct InterchangeRow {
    pub user: String,
    pub item: String,
    /// 1-based.
    pub rank: usize,
    pub score: f64,
}

pub fn write_interchange<W: Write>(out: W, rows: &[InterchangeRow]) -> Result<()> {
    let io = |e: std::io::Error| LateFusionError::Io { path: "<ranked lists>".into(), source: e };
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').has_headers(false).from_writer(out);
    for r in rows {
        w.write_record([r.user.as_str(), r.item.as_str(), &r.rank.to_string(), &r.score.to_string()])
            .map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

pub fn read_interchange<R: Read>(input: R) -> Result<Vec<InterchangeRow>> {
    let mut rd = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(input);
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k + 1;
        let bad = |message: String| LateFusionError::Parse { line, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", rec.len())));
        }
        let rank: usize = rec[2]
            .trim()
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| bad(format!("rank {:?} is not a positive integer", &rec[2])))?;
        let score: f64 = rec[3]
            .trim()
            .parse()
            .map_err(|_| bad(format!("score {:?} is not a number", &rec[3])))?;
        rows.push(InterchangeRow {
            user: rec[0].trim().to_string(),
            item: rec[1].trim().to_string(),
            rank,
            score,
        });
    }
    Ok(rows)
}

/// Groups rows into per-user item lists ordered by rank. Duplicate ranks or
/// items within one user's list are rejected.
pub fn lists_by_user(rows: &[InterchangeRow]) -> Result<BTreeMap<String, Vec<String>>> {
    let mut grouped: BTreeMap<String, Vec<&InterchangeRow>> = BTreeMap::new();
    for r in rows {
        grouped.entry(r.user.clone()).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(user, mut rs)| {
            rs.sort_by_key(|r| r.rank);
            let mut seen = BTreeSet::new();
            for w in rs.windows(2) {
                if w[0].rank == w[1].rank {
                    return Err(LateFusionError::Argument(format!(
                        "user {user} has two items at rank {}",
                        w[0].rank
                    )));
                }
            }
            for r in &rs {
                if !seen.insert(r.item.as_str()) {
                    return Err(LateFusionError::Argument(format!(
                        "user {user} lists item {} twice",
                        r.item
                    )));
                }
            }
            let items = rs.iter().map(|r| r.item.clone()).collect();
            Ok((user, items))
        })
        .collect()
}

/// Fuses per-system lists keyed by external ids. Items are indexed in
/// natural id order, which fixes the tie-break; `catalog_size` defaults to
/// the number of distinct items seen.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_lists(
    systems: &[BTreeMap<String, Vec<String>>],
    rule: AggregationRule,
    weights: Option<Vec<f64>>,
    rrf_k: u32,
    missing_rank: MissingRank,
    catalog_size: Option<usize>,
    top_n: Option<usize>,
) -> Result<Vec<InterchangeRow>> {
    let mut items: Vec<&String> = systems.iter().flat_map(|s| s.values().flatten()).collect::<BTreeSet<_>>().into_iter().collect();
    items.sort_by(|a, b| compare_ids(a, b));
    let index: HashMap<&str, usize> = items.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let n = catalog_size.unwrap_or(items.len());
    if n < items.len() {
        return Err(LateFusionError::Argument(format!(
            "catalog size {n} is smaller than the {} distinct listed items",
            items.len()
        )));
    }
    let mut users: Vec<&String> = systems.iter().flat_map(|s| s.keys()).collect::<BTreeSet<_>>().into_iter().collect();
    users.sort_by(|a, b| compare_ids(a, b));
    let mut out = Vec::new();
    for (u, user) in users.iter().enumerate() {
        let lists = systems
            .iter()
            .map(|s| {
                s.get(*user)
                    .map(|l| l.iter().map(|i| index[i.as_str()]).collect())
                    .unwrap_or_default()
            })
            .collect();
        let input = FusionInput {
            user: u,
            lists,
            catalog_size: n,
            weights: weights.clone(),
            rrf_k,
            missing_rank,
        };
        let mut meta = aggregate(rule, &input)?;
        if let Some(k) = top_n {
            meta.truncate(k);
        }
        for (r, (&i, &s)) in meta.items.iter().zip(&meta.fused_scores).enumerate() {
            out.push(InterchangeRow {
                user: (*user).clone(),
                item: items[i].clone(),
                rank: r + 1,
                score: s,
            });
        }
    }
    Ok(out)
}
