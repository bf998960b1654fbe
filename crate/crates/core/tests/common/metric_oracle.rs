//! Single-loop reference implementations of the ranking metrics. Quantities
//! that are ratios of counts are computed as exact rationals.

use mmrec::metrics::{
    calibration_bias_at_k, coldrate_at_k, coverage_at_k, hitrate_at_k, ild_at_k, ndcg_at_k,
    novelty_at_k, recall_at_k, EvalContext,
};
use mmrec::models::RankedList;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;

type Q = Ratio<i64>;

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn contains(v: &[usize], x: usize) -> bool {
    let mut found = false;
    for &y in v {
        if y == x {
            found = true;
        }
    }
    found
}

fn cutoff(l: &RankedList, k: usize) -> &[usize] {
    if l.items.len() > k {
        &l.items[..k]
    } else {
        &l.items
    }
}

pub fn recall(lists: &[RankedList], ctx: &EvalContext) -> Option<Q> {
    let mut total = Q::from_integer(0);
    let mut users = 0;
    for l in lists {
        let rel = &ctx.relevant[l.user];
        if rel.is_empty() {
            continue;
        }
        let mut hits = 0;
        for &i in cutoff(l, ctx.k) {
            if contains(rel, i) {
                hits += 1;
            }
        }
        total += Q::new(hits, ctx.k.min(rel.len()) as i64);
        users += 1;
    }
    (users > 0).then(|| total / users)
}

pub fn hitrate(lists: &[RankedList], ctx: &EvalContext) -> Option<Q> {
    let (mut hit, mut users) = (0, 0);
    for l in lists {
        let rel = &ctx.relevant[l.user];
        if rel.is_empty() {
            continue;
        }
        users += 1;
        if cutoff(l, ctx.k).iter().any(|&i| contains(rel, i)) {
            hit += 1;
        }
    }
    (users > 0).then(|| Q::new(hit, users))
}

pub fn ndcg(lists: &[RankedList], ctx: &EvalContext) -> Option<f64> {
    let disc = |rank: usize| 2f64.ln() / ((rank + 1) as f64).ln();
    let (mut total, mut users) = (0.0, 0);
    for l in lists {
        let rel = &ctx.relevant[l.user];
        if rel.is_empty() {
            continue;
        }
        let (mut dcg, mut idcg) = (0.0, 0.0);
        for (p, &i) in cutoff(l, ctx.k).iter().enumerate() {
            if contains(rel, i) {
                dcg += disc(p + 1);
            }
        }
        for j in 1..=ctx.k.min(rel.len()) {
            idcg += disc(j);
        }
        total += dcg / idcg;
        users += 1;
    }
    (users > 0).then(|| total / users as f64)
}

pub fn coverage(lists: &[RankedList], ctx: &EvalContext) -> Q {
    let mut seen = vec![false; ctx.catalog_size];
    for l in lists {
        for &i in cutoff(l, ctx.k) {
            seen[i] = true;
        }
    }
    Q::new(seen.iter().filter(|&&s| s).count() as i64, ctx.catalog_size as i64)
}

pub fn coldrate(lists: &[RankedList], ctx: &EvalContext) -> Option<Q> {
    let (mut cold, mut slots) = (0, 0);
    for l in lists {
        for &i in cutoff(l, ctx.k) {
            slots += 1;
            if ctx.popularity[i] == 0 {
                cold += 1;
            }
        }
    }
    (slots > 0).then(|| Q::new(cold, slots))
}

pub fn novelty(lists: &[RankedList], ctx: &EvalContext) -> Option<f64> {
    let mut denom = ctx.catalog_size;
    for &c in &ctx.popularity {
        denom += c;
    }
    let (mut total, mut slots) = (0.0, 0);
    for l in lists {
        for &i in cutoff(l, ctx.k) {
            let p = (ctx.popularity[i] + 1) as f64 / denom as f64;
            total -= p.ln() / 2f64.ln();
            slots += 1;
        }
    }
    (slots > 0).then(|| total / slots as f64)
}

pub fn ild(lists: &[RankedList], ctx: &EvalContext) -> Option<f64> {
    let feats = ctx.features.as_ref().unwrap();
    let (mut total, mut users) = (0.0, 0);
    for l in lists {
        let top = cutoff(l, ctx.k);
        if top.len() < 2 {
            continue;
        }
        let (mut dist, mut pairs) = (0.0, 0);
        for a in 0..top.len() {
            for b in 0..top.len() {
                if a >= b {
                    continue;
                }
                let x = feats[top[a]].as_ref().unwrap();
                let y = feats[top[b]].as_ref().unwrap();
                let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
                for d in 0..x.len() {
                    xy += x[d] * y[d];
                    xx += x[d] * x[d];
                    yy += y[d] * y[d];
                }
                let cos = if xx == 0.0 || yy == 0.0 { 0.0 } else { xy / (xx * yy).sqrt() };
                dist += 1.0 - cos;
                pairs += 1;
            }
        }
        total += dist / pairs as f64;
        users += 1;
    }
    (users > 0).then(|| total / users as f64)
}

fn genre_mass(items: &[usize], genres: &[Vec<usize>], n_genres: usize) -> Option<Vec<Q>> {
    let mut mass = vec![Q::from_integer(0); n_genres];
    let mut tagged = 0;
    for &i in items {
        let g = &genres[i];
        if g.is_empty() {
            continue;
        }
        tagged += 1;
        for &x in g {
            mass[x] += Q::new(1, g.len() as i64);
        }
    }
    if tagged == 0 {
        return None;
    }
    Some(mass.into_iter().map(|m| m / tagged).collect())
}

pub fn calibration(lists: &[RankedList], ctx: &EvalContext) -> Option<Q> {
    let genres = ctx.item_genres.as_ref().unwrap();
    let n_genres = genres.iter().flatten().map(|&g| g + 1).max().unwrap_or(0);
    let mut total = Q::from_integer(0);
    let mut users = 0;
    for l in lists {
        let rec = genre_mass(cutoff(l, ctx.k), genres, n_genres);
        let hist = genre_mass(&ctx.history[l.user], genres, n_genres);
        let (Some(p), Some(q)) = (rec, hist) else { continue };
        let mut tv = Q::from_integer(0);
        for g in 0..n_genres {
            let d = p[g] - q[g];
            tv += if d < Q::from_integer(0) { -d } else { d };
        }
        total += tv / 2;
        users += 1;
    }
    (users > 0).then(|| total / users)
}

/// A random small instance: up to 8 users, 12 items, K up to 5. Lists may
/// be shorter or longer than K; some users have no relevance or history.
pub fn random_instance(rng: &mut impl Rng) -> (Vec<RankedList>, EvalContext) {
    let n_users = rng.random_range(1..=8);
    let n_items: usize = rng.random_range(1..=12);
    let k = rng.random_range(1..=5);
    let subset = |rng: &mut dyn rand::RngCore, p: f64| -> Vec<usize> {
        (0..n_items).filter(|_| rng.random_bool(p)).collect()
    };
    let mut lists = Vec::new();
    let mut relevant = Vec::new();
    let mut history = Vec::new();
    for u in 0..n_users {
        relevant.push(subset(rng, 0.3));
        history.push(subset(rng, 0.3));
        let mut items: Vec<usize> = (0..n_items).collect();
        items.shuffle(rng);
        items.truncate(rng.random_range(0..=n_items.min(7)));
        let scores = (0..items.len()).map(|p| -(p as f64)).collect();
        lists.push(RankedList { user: u, items, scores });
    }
    let popularity = (0..n_items)
        .map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(1..6) })
        .collect();
    let features = (0..n_items)
        .map(|_| Some((0..3).map(|_| rng.random_range(-2..=2) as f64).collect()))
        .collect();
    let item_genres = (0..n_items)
        .map(|_| {
            let mut g: Vec<usize> = (0..4).filter(|_| rng.random_bool(0.35)).collect();
            g.shuffle(rng);
            g
        })
        .collect();
    let ctx = EvalContext {
        k,
        catalog_size: n_items,
        relevant,
        popularity,
        history,
        features: Some(features),
        item_genres: Some(item_genres),
        ..EvalContext::default()
    };
    (lists, ctx)
}

fn exact(name: &str, got: Option<f64>, want: Option<Q>) -> Result<(), String> {
    match (got, want) {
        (None, None) => Ok(()),
        (Some(g), Some(w)) if g == to_f64(w) => Ok(()),
        _ => Err(format!("{name}: library {got:?}, oracle {want:?}")),
    }
}

fn close(name: &str, got: Option<f64>, want: Option<f64>) -> Result<(), String> {
    match (got, want) {
        (None, None) => Ok(()),
        (Some(g), Some(w)) if (g - w).abs() <= 1e-12 => Ok(()),
        _ => Err(format!("{name}: library {got:?}, oracle {want:?}")),
    }
}

/// Compares all eight metrics on one instance. Single-ratio metrics must be
/// bit-identical to the rational value; the rest agree to 1e-12.
pub fn check_instance(lists: &[RankedList], ctx: &EvalContext) -> Result<(), String> {
    let v = |r: mmrec::metrics::Result<mmrec::metrics::Averaged>| r.map(|a| a.value).map_err(|e| e.to_string());
    exact("hitrate", v(hitrate_at_k(lists, ctx))?, hitrate(lists, ctx))?;
    exact("coverage", v(coverage_at_k(lists, ctx))?, Some(coverage(lists, ctx)))?;
    exact("coldrate", v(coldrate_at_k(lists, ctx))?, coldrate(lists, ctx))?;
    close("recall", v(recall_at_k(lists, ctx))?, recall(lists, ctx).map(to_f64))?;
    close("ndcg", v(ndcg_at_k(lists, ctx))?, ndcg(lists, ctx))?;
    close("novelty", v(novelty_at_k(lists, ctx))?, novelty(lists, ctx))?;
    close("ild", v(ild_at_k(lists, ctx))?, ild(lists, ctx))?;
    close(
        "calibration_bias",
        v(calibration_bias_at_k(lists, ctx))?,
        calibration(lists, ctx).map(to_f64),
    )?;
    Ok(())
}
