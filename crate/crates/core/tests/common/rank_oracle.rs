//! Naive rank aggregation in exact rational arithmetic.

use num_rational::Ratio;

pub type Q = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Borda,
    Weighted,
    Average,
    Rrf,
}

fn rank_in(list: &[usize], item: usize, catalog: usize, catalog_missing: bool) -> i64 {
    for (k, &x) in list.iter().enumerate() {
        if x == item {
            return k as i64 + 1;
        }
    }
    if catalog_missing {
        catalog as i64
    } else {
        list.len() as i64 + 1
    }
}

/// Fused order and exact scores. `weights` are only read by the weighted rule.
pub fn fuse(
    rule: Rule,
    lists: &[Vec<usize>],
    catalog: usize,
    weights: &[Q],
    k: i64,
    catalog_missing: bool,
) -> Vec<(usize, Q)> {
    let mut union: Vec<usize> = Vec::new();
    for l in lists {
        for &i in l {
            if !union.contains(&i) {
                union.push(i);
            }
        }
    }
    let m = lists.len() as i64;
    let mut scored: Vec<(usize, Q)> = union
        .iter()
        .map(|&i| {
            let mut s = Q::from_integer(0);
            for (idx, l) in lists.iter().enumerate() {
                let r = rank_in(l, i, catalog, catalog_missing);
                s += match rule {
                    Rule::Borda => Q::from_integer(catalog as i64 - r + 1),
                    Rule::Weighted => weights[idx] * Q::from_integer(catalog as i64 - r + 1),
                    Rule::Average => Q::new(r, m),
                    Rule::Rrf => Q::new(1, k + r),
                };
            }
            (i, s)
        })
        .collect();
    // selection sort: best score first, smaller item on ties
    let lower_is_better = rule == Rule::Average;
    let mut out = Vec::new();
    while !scored.is_empty() {
        let mut best = 0;
        for c in 1..scored.len() {
            let (ci, cs) = scored[c];
            let (bi, bs) = scored[best];
            let better = if lower_is_better { cs < bs } else { cs > bs };
            if better || (cs == bs && ci < bi) {
                best = c;
            }
        }
        out.push(scored.remove(best));
    }
    out
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Every ordered arrangement of `len` distinct items drawn from `0..n`.
pub fn arrangements(n: usize, len: usize) -> Vec<Vec<usize>> {
    if len == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for prefix in arrangements(n, len - 1) {
        for i in 0..n {
            if !prefix.contains(&i) {
                let mut p = prefix.clone();
                p.push(i);
                out.push(p);
            }
        }
    }
    out
}

/// Weight vectors over `m` systems, as exact rationals.
pub fn weight_sets(m: usize) -> Vec<Vec<Q>> {
    let mut sets = vec![vec![Q::new(1, m as i64); m]];
    let tri = (m * (m + 1) / 2) as i64;
    sets.push((0..m).map(|k| Q::new((m - k) as i64, tri)).collect());
    let mut degenerate = vec![Q::from_integer(0); m];
    degenerate[0] = Q::from_integer(1);
    sets.push(degenerate);
    match m {
        2 => sets.push(vec![Q::new(9, 10), Q::new(1, 10)]),
        3 => sets.push(vec![Q::new(7, 10), Q::new(1, 5), Q::new(1, 10)]),
        _ => {}
    }
    sets
}

/// Runs all four library rules on one instance and compares each with the
/// oracle: identical item order, scores equal to 1e-12 relative.
pub fn check_instance(lists: &[Vec<usize>], catalog: usize, catalog_missing: bool) -> Result<(), String> {
    check_with_weights(lists, catalog, catalog_missing, &weight_sets(lists.len()))
}

/// As [`check_instance`], running weighted Borda once per entry of `weights`.
pub fn check_with_weights(
    lists: &[Vec<usize>],
    catalog: usize,
    catalog_missing: bool,
    weights: &[Vec<Q>],
) -> Result<(), String> {
    use mmrec::latefusion::{aggregate, AggregationRule, FusionInput, MissingRank};
    let missing = if catalog_missing { MissingRank::CatalogSize } else { MissingRank::ListLenPlusOne };
    let base = FusionInput {
        missing_rank: missing,
        ..FusionInput::new(0, lists.to_vec(), catalog)
    };
    let mut cases: Vec<(AggregationRule, Rule, Vec<Q>)> = vec![
        (AggregationRule::Borda, Rule::Borda, vec![]),
        (AggregationRule::AverageRank, Rule::Average, vec![]),
        (AggregationRule::Rrf, Rule::Rrf, vec![]),
    ];
    for w in weights {
        cases.push((AggregationRule::WeightedBorda, Rule::Weighted, w.clone()));
    }
    for (rule, oracle_rule, w) in cases {
        let mut input = base.clone();
        if !w.is_empty() {
            input.weights = Some(w.iter().map(|q| to_f64(*q)).collect());
        }
        let got = aggregate(rule, &input).map_err(|e| format!("{rule:?}: {e}"))?;
        let want = fuse(oracle_rule, lists, catalog, &w, 60, catalog_missing);
        let want_items: Vec<usize> = want.iter().map(|x| x.0).collect();
        if got.items != want_items {
            return Err(format!("{rule:?} {w:?} on {lists:?} (n={catalog}): got {:?}, want {want_items:?}", got.items));
        }
        for (g, (_, q)) in got.fused_scores.iter().zip(&want) {
            let q = to_f64(*q);
            if (g - q).abs() > 1e-12 * q.abs().max(1.0) {
                return Err(format!("{rule:?} score {g} vs {q} on {lists:?}"));
            }
        }
    }
    Ok(())
}
