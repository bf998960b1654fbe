//! Randomized corpora and an invariant checker for ingest, k-core, split and
//! cold-start simulation. The k-core reference works on raw id pairs.

use std::collections::{BTreeMap, BTreeSet};

use mmrec::corpus::{dataset_stats, k_core_filter, simulate_cold_start, split, CorpusError, InteractionLog, SplitStrategy};
use rand::Rng;

use super::rng;

pub type Record = (String, String, f64, i64);

/// Up to 60 records over at most 14 users and 11 items with coarse
/// timestamps, so duplicates and ties are common.
pub fn random_records(seed: u64) -> Vec<Record> {
    let mut r = rng(seed);
    let n_users = r.random_range(1..15);
    let n_items = r.random_range(1..12);
    let n = r.random_range(1..61);
    (0..n)
        .map(|_| {
            (
                format!("{}", r.random_range(0..n_users)),
                format!("m{}", r.random_range(0..n_items)),
                r.random_range(1..11) as f64 / 2.0,
                r.random_range(0..20),
            )
        })
        .collect()
}

/// Removes users and items below `k` one pass at a time until nothing changes.
pub fn naive_k_core(pairs: &BTreeSet<(String, String)>, k: usize) -> BTreeSet<(String, String)> {
    let mut cur = pairs.clone();
    loop {
        let mut du: BTreeMap<&str, usize> = BTreeMap::new();
        let mut di: BTreeMap<&str, usize> = BTreeMap::new();
        for (u, i) in &cur {
            *du.entry(u).or_default() += 1;
            *di.entry(i).or_default() += 1;
        }
        let next: BTreeSet<(String, String)> =
            cur.iter().filter(|(u, i)| du[u.as_str()] >= k && di[i.as_str()] >= k).cloned().collect();
        if next.len() == cur.len() {
            return next;
        }
        cur = next;
    }
}

fn pairs_of(log: &InteractionLog) -> BTreeSet<(String, String)> {
    log.events()
        .iter()
        .map(|e| (log.users().id(e.user).to_string(), log.items().id(e.item).to_string()))
        .collect()
}

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

/// Ceiling of `num / den * n` in integers; ratios here are `num/den`.
fn ceil_frac(num: usize, den: usize, n: usize) -> usize {
    (num * n).div_ceil(den)
}

/// Checks every corpus invariant on the corpus generated from `seed`.
pub fn check_corpus(seed: u64) -> Result<(), String> {
    let records = random_records(seed);
    let log = InteractionLog::from_records(records.iter().map(|(u, i, r, t)| (u, i, *r, *t)));

    // ingest: dense vocabularies, one event per pair, latest timestamp kept
    let mut latest: BTreeMap<(String, String), i64> = BTreeMap::new();
    for (u, i, _, t) in &records {
        let e = latest.entry((u.clone(), i.clone())).or_insert(*t);
        *e = (*e).max(*t);
    }
    ensure(log.len() == latest.len(), || format!("{} events for {} distinct pairs", log.len(), latest.len()))?;
    for e in log.events() {
        ensure(e.user < log.n_users() && e.item < log.n_items(), || "index outside vocabulary".into())?;
        let key = (log.users().id(e.user).to_string(), log.items().id(e.item).to_string());
        ensure(latest[&key] == e.timestamp, || format!("pair {key:?} kept timestamp {}", e.timestamp))?;
    }
    let users: BTreeSet<&str> = records.iter().map(|r| r.0.as_str()).collect();
    let items: BTreeSet<&str> = records.iter().map(|r| r.1.as_str()).collect();
    ensure(log.n_users() == users.len() && log.n_items() == items.len(), || "vocabulary size".into())?;

    // stats
    let s = dataset_stats(&log).map_err(|e| e.to_string())?;
    ensure(s.n_interactions == log.len(), || "stats |R|".into())?;
    ensure((s.avg_per_user * s.n_users as f64 - s.n_interactions as f64).abs() < 1e-9, || "avg/user identity".into())?;
    ensure((s.avg_per_item * s.n_items as f64 - s.n_interactions as f64).abs() < 1e-9, || "avg/item identity".into())?;
    ensure(s.density > 0.0 && s.density <= 1.0, || format!("density {}", s.density))?;

    // k-core
    let mut r = rng(seed ^ 0xc0de);
    let k = r.random_range(1..5);
    let expect = naive_k_core(&pairs_of(&log), k);
    match k_core_filter(&log, k) {
        Ok(core) => {
            ensure(pairs_of(&core) == expect, || format!("k={k} core differs from reference"))?;
            ensure(core.user_degrees().iter().chain(&core.item_degrees()).all(|&d| d >= k), || "degree bound".into())?;
            let again = k_core_filter(&core, k).map_err(|e| e.to_string())?;
            ensure(again == core, || "k-core not idempotent".into())?;
        }
        Err(CorpusError::EmptyAfterFilter { .. }) => ensure(expect.is_empty(), || "spurious empty k-core".into())?,
        Err(e) => return Err(format!("k-core: {e}")),
    }

    // splits
    let ratio_num = r.random_range(1..10);
    let ratio = ratio_num as f64 / 10.0;
    let split_seed = r.random::<u64>();
    for strategy in [SplitStrategy::Random, SplitStrategy::Temporal, SplitStrategy::PerUser] {
        let plan = split(&log, strategy, ratio, split_seed).map_err(|e| e.to_string())?;
        let train: BTreeSet<usize> = plan.train.iter().copied().collect();
        let test: BTreeSet<usize> = plan.test.iter().copied().collect();
        ensure(train.is_disjoint(&test), || format!("{strategy:?} overlap"))?;
        ensure(train.len() + test.len() == log.len(), || format!("{strategy:?} does not cover the log"))?;
        let ts = |e: &usize| log.events()[*e].timestamp;
        match strategy {
            SplitStrategy::Random | SplitStrategy::Temporal => {
                ensure(test.len() == ceil_frac(ratio_num, 10, log.len()), || format!("{strategy:?} test size {}", test.len()))?;
            }
            SplitStrategy::PerUser => {}
        }
        if strategy == SplitStrategy::Temporal && !train.is_empty() && !test.is_empty() {
            let max_train = train.iter().map(ts).max().unwrap();
            let min_test = test.iter().map(ts).min().unwrap();
            ensure(max_train <= min_test, || format!("chronology {max_train} > {min_test}"))?;
        }
        if strategy == SplitStrategy::PerUser {
            for u in 0..log.n_users() {
                let n_u = log.events().iter().filter(|e| e.user == u).count();
                let n_train = train.iter().filter(|&&e| log.events()[e].user == u).count();
                ensure(n_u < 2 || n_train >= 1, || format!("user {u} has no train event"))?;
            }
        }

        // cold start
        let frac_num = r.random_range(0..10);
        let candidates: BTreeSet<usize> = plan.test.iter().map(|&e| log.events()[e].item).collect();
        match simulate_cold_start(&plan, &log, frac_num as f64 / 10.0, r.random()) {
            Ok(cold) => {
                ensure(cold.cold_items.len() == ceil_frac(frac_num, 10, candidates.len()), || "cold item count".into())?;
                let ctrain: BTreeSet<usize> = cold.train.iter().copied().collect();
                let ctest: BTreeSet<usize> = cold.test.iter().copied().collect();
                ensure(ctrain.is_disjoint(&ctest) && ctrain.len() + ctest.len() == log.len(), || "cold partition".into())?;
                for &i in &cold.cold_items {
                    ensure(!ctrain.iter().any(|&e| log.events()[e].item == i), || format!("cold item {i} still trained"))?;
                    ensure(ctest.iter().any(|&e| log.events()[e].item == i), || format!("cold item {i} not tested"))?;
                }
                ensure(ctrain.is_subset(&train), || "cold start added train events".into())?;
            }
            Err(CorpusError::DegenerateSplit(_)) => {
                ensure(frac_num > 0, || "fraction 0 cannot be degenerate".into())?;
            }
            Err(e) => return Err(format!("cold start: {e}")),
        }
    }
    Ok(())
}
