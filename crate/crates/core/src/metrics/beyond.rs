use std::collections::{BTreeMap, BTreeSet};

use super::{Averaged, ColdRateMode, EvalContext, MetricError, Result};
use crate::models::RankedList;

/// Share of the catalog that appears in at least one top-K list. The value
/// is reported with `included` set to the number of lists.
pub fn coverage_at_k(lists: &[RankedList], ctx: &EvalContext) -> Result<Averaged> {
    ctx.check()?;
    if ctx.catalog_size == 0 {
        return Err(MetricError::Argument("catalog size must be positive".into()));
    }
    let seen: BTreeSet<usize> = lists.iter().flat_map(|l| ctx.top(l).iter().copied()).collect();
    Ok(Averaged {
        value: Some(seen.len() as f64 / ctx.catalog_size as f64),
        included: lists.len(),
        excluded: 0,
    })
}

fn is_cold(ctx: &EvalContext, i: usize) -> bool {
    ctx.popularity.get(i).copied().unwrap_or(0) == 0
}

/// Item mode: share of top-K slots filled by items without training
/// events. User mode: share of listed users without training events.
pub fn coldrate_at_k(lists: &[RankedList], ctx: &EvalContext) -> Result<Averaged> {
    ctx.check()?;
    let (cold, total) = match ctx.cold_mode {
        ColdRateMode::Item => lists.iter().fold((0usize, 0usize), |(c, t), l| {
            let top = ctx.top(l);
            (c + top.iter().filter(|&&i| is_cold(ctx, i)).count(), t + top.len())
        }),
        ColdRateMode::User => {
            let cold = lists
                .iter()
                .filter(|l| ctx.history.get(l.user).is_none_or(|h| h.is_empty()))
                .count();
            (cold, lists.len())
        }
    };
    Ok(Averaged {
        value: (total > 0).then(|| cold as f64 / total as f64),
        included: lists.len(),
        excluded: 0,
    })
}

/// Mean surprisal `-log2 p(i)` over all top-K slots, with add-one smoothed
/// popularity `p(i) = (c_i + 1) / (sum c + |I|)`.
pub fn novelty_at_k(lists: &[RankedList], ctx: &EvalContext) -> Result<Averaged> {
    ctx.check()?;
    let n_items = ctx.catalog_size.max(ctx.popularity.len());
    let total = ctx.popularity.iter().sum::<usize>() + n_items;
    let (mut sum, mut slots) = (0.0, 0usize);
    for l in lists {
        for &i in ctx.top(l) {
            let c = ctx.popularity.get(i).copied().unwrap_or(0);
            sum += -((c + 1) as f64 / total as f64).log2();
            slots += 1;
        }
    }
    Ok(Averaged {
        value: (slots > 0).then(|| sum / slots as f64),
        included: lists.len(),
        excluded: 0,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Per user, mean `1 - cos(e_i, e_j)` over unordered pairs in the top-K;
/// averaged over users with at least two items. A zero vector has cosine 0
/// with everything.
pub fn ild_at_k(lists: &[RankedList], ctx: &EvalContext) -> Result<Averaged> {
    ctx.check()?;
    let features = ctx
        .features
        .as_ref()
        .ok_or_else(|| MetricError::Argument("diversity needs item features".into()))?;
    let (mut sum, mut included, mut excluded) = (0.0, 0, 0);
    for l in lists {
        let top = ctx.top(l);
        if top.len() < 2 {
            excluded += 1;
            continue;
        }
        let rows: Vec<&[f64]> = top
            .iter()
            .map(|&i| {
                features
                    .get(i)
                    .and_then(|f| f.as_deref())
                    .ok_or_else(|| MetricError::MissingFeature(ctx.item_name(i)))
            })
            .collect::<Result<_>>()?;
        let (mut d, mut pairs) = (0.0, 0usize);
        for a in 0..rows.len() {
            for b in a + 1..rows.len() {
                d += 1.0 - cosine(rows[a], rows[b]);
                pairs += 1;
            }
        }
        sum += d / pairs as f64;
        included += 1;
    }
    Ok(Averaged::from_terms(sum, included, excluded))
}

fn genre_distribution(items: &[usize], genres: &[Vec<usize>]) -> Option<BTreeMap<usize, f64>> {
    let mut mass: BTreeMap<usize, f64> = BTreeMap::new();
    let mut total = 0.0;
    for &i in items {
        let g = genres.get(i).map(Vec::as_slice).unwrap_or(&[]);
        if g.is_empty() {
            continue;
        }
        let share = 1.0 / g.len() as f64;
        for &x in g {
            *mass.entry(x).or_insert(0.0) += share;
        }
        total += 1.0;
    }
    if total == 0.0 {
        return None;
    }
    for v in mass.values_mut() {
        *v /= total;
    }
    Some(mass)
}

/// Per user, total-variation distance between the genre distribution of
/// the top-K and of the training history; users whose history or list
/// carries no genre are excluded.
pub fn calibration_bias_at_k(lists: &[RankedList], ctx: &EvalContext) -> Result<Averaged> {
    ctx.check()?;
    let genres = ctx
        .item_genres
        .as_ref()
        .ok_or_else(|| MetricError::Argument("calibration needs item genres".into()))?;
    let (mut sum, mut included, mut excluded) = (0.0, 0, 0);
    for l in lists {
        let hist = ctx.history.get(l.user).map(Vec::as_slice).unwrap_or(&[]);
        let (Some(p), Some(q)) = (genre_distribution(ctx.top(l), genres), genre_distribution(hist, genres)) else {
            excluded += 1;
            continue;
        };
        let keys: BTreeSet<usize> = p.keys().chain(q.keys()).copied().collect();
        let tv: f64 = keys
            .iter()
            .map(|g| (p.get(g).unwrap_or(&0.0) - q.get(g).unwrap_or(&0.0)).abs())
            .sum::<f64>()
            / 2.0;
        sum += tv;
        included += 1;
    }
    Ok(Averaged::from_terms(sum, included, excluded))
}
