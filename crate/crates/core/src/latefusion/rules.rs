use std::collections::{BTreeSet, HashMap};

use super::{AggregationRule, FusionInput, LateFusionError, MetaRanking, MissingRank, Result};

/// Scores within this relative distance are treated as tied, so that
/// rounding in floating sums cannot break exact ties.
const TIE_TOLERANCE: f64 = 1e-12;

struct RankTable {
    /// Union of all list items, ascending.
    items: Vec<usize>,
    /// `ranks[k][m]`: 1-based rank of `items[k]` in system `m`.
    ranks: Vec<Vec<usize>>,
}

fn rank_table(input: &FusionInput) -> Result<RankTable> {
    if input.lists.is_empty() {
        return Err(LateFusionError::Argument("at least one ranked list is required".into()));
    }
    let n = input.catalog_size;
    let mut positions: Vec<HashMap<usize, usize>> = Vec::with_capacity(input.lists.len());
    for (m, list) in input.lists.iter().enumerate() {
        if list.len() > n {
            return Err(LateFusionError::Argument(format!(
                "list {m} has {} items but the catalog has {n}",
                list.len()
            )));
        }
        let mut pos = HashMap::with_capacity(list.len());
        for (r, &i) in list.iter().enumerate() {
            if i >= n {
                return Err(LateFusionError::Argument(format!(
                    "item index {i} in list {m} is outside the catalog of {n}"
                )));
            }
            if pos.insert(i, r + 1).is_some() {
                return Err(LateFusionError::Argument(format!("item {i} appears twice in list {m}")));
            }
        }
        positions.push(pos);
    }
    let items: Vec<usize> = input
        .lists
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let ranks = items
        .iter()
        .map(|i| {
            positions
                .iter()
                .zip(&input.lists)
                .map(|(pos, list)| {
                    pos.get(i).copied().unwrap_or(match input.missing_rank {
                        MissingRank::ListLenPlusOne => list.len() + 1,
                        MissingRank::CatalogSize => n,
                    })
                })
                .collect()
        })
        .collect();
    Ok(RankTable { items, ranks })
}

/// Sum of terms in ascending order, independent of system order.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Replaces each score by the first score of its run of near-equal values
/// when walking from best to worst.
fn snap_ties(scores: &mut [f64], descending: bool) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let c = scores[a].total_cmp(&scores[b]);
        if descending { c.reverse() } else { c }
    });
    let mut leader: Option<f64> = None;
    for k in order {
        let s = scores[k];
        match leader {
            Some(l) if (s - l).abs() <= TIE_TOLERANCE * l.abs().max(s.abs()) => scores[k] = l,
            _ => leader = Some(s),
        }
    }
}

fn finish(user: usize, items: Vec<usize>, scores: Vec<f64>, descending: bool) -> MetaRanking {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let c = scores[a].total_cmp(&scores[b]);
        let c = if descending { c.reverse() } else { c };
        c.then(items[a].cmp(&items[b]))
    });
    MetaRanking {
        user,
        items: order.iter().map(|&k| items[k]).collect(),
        fused_scores: order.iter().map(|&k| scores[k]).collect(),
    }
}

/// `s(i) = sum_m (|I| - rank_m(i) + 1)`, larger first.
pub fn borda(input: &FusionInput) -> Result<MetaRanking> {
    let t = rank_table(input)?;
    let n = input.catalog_size as i64;
    let scores = t
        .ranks
        .iter()
        .map(|rs| rs.iter().map(|&r| n - r as i64 + 1).sum::<i64>() as f64)
        .collect();
    Ok(finish(input.user, t.items, scores, true))
}

fn check_weights(input: &FusionInput) -> Result<&[f64]> {
    let w = input
        .weights
        .as_deref()
        .ok_or_else(|| LateFusionError::Argument("weighted borda needs per-system weights".into()))?;
    if w.len() != input.lists.len() {
        return Err(LateFusionError::Argument(format!(
            "{} weights for {} lists",
            w.len(),
            input.lists.len()
        )));
    }
    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(LateFusionError::Argument("weights must be finite and non-negative".into()));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(LateFusionError::Argument(format!("weights sum to {total}, expected 1")));
    }
    Ok(w)
}

/// `s(i) = sum_m w_m (|I| - rank_m(i) + 1)`, larger first.
pub fn weighted_borda(input: &FusionInput) -> Result<MetaRanking> {
    let w = check_weights(input)?;
    let t = rank_table(input)?;
    let n = input.catalog_size as f64;
    let mut scores: Vec<f64> = t
        .ranks
        .iter()
        .map(|rs| ordered_sum(rs.iter().zip(w).map(|(&r, &wm)| wm * (n - r as f64 + 1.0)).collect()))
        .collect();
    snap_ties(&mut scores, true);
    Ok(finish(input.user, t.items, scores, true))
}

/// Mean rank across systems, smaller first.
pub fn average_rank(input: &FusionInput) -> Result<MetaRanking> {
    let t = rank_table(input)?;
    let m = input.lists.len() as f64;
    let scores = t
        .ranks
        .iter()
        .map(|rs| rs.iter().sum::<usize>() as f64 / m)
        .collect();
    Ok(finish(input.user, t.items, scores, false))
}

/// Reciprocal rank fusion `s(i) = sum_m 1 / (k + rank_m(i))`, larger first.
pub fn rrf(input: &FusionInput) -> Result<MetaRanking> {
    let t = rank_table(input)?;
    let k = f64::from(input.rrf_k);
    let mut scores: Vec<f64> = t
        .ranks
        .iter()
        .map(|rs| ordered_sum(rs.iter().map(|&r| 1.0 / (k + r as f64)).collect()))
        .collect();
    snap_ties(&mut scores, true);
    Ok(finish(input.user, t.items, scores, true))
}

pub fn aggregate(rule: AggregationRule, input: &FusionInput) -> Result<MetaRanking> {
    match rule {
        AggregationRule::Borda => borda(input),
        AggregationRule::WeightedBorda => weighted_borda(input),
        AggregationRule::AverageRank => average_rank(input),
        AggregationRule::Rrf => rrf(input),
    }
}
