use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CorpusError, InteractionLog, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Random,
    Temporal,
    PerUser,
}

impl SplitStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitStrategy::Random => "random",
            SplitStrategy::Temporal => "temporal",
            SplitStrategy::PerUser => "per_user",
        }
    }
}

/// Disjoint train/test event index sets over one [`InteractionLog`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Sorted event indices.
    pub train: Vec<usize>,
    /// Sorted event indices.
    pub test: Vec<usize>,
    pub strategy: SplitStrategy,
    pub test_ratio: f64,
    pub seed: u64,
    /// Items whose train events were evicted by cold-start simulation.
    pub cold_items: BTreeSet<usize>,
}

impl SplitPlan {
    /// Per-user sorted train item lists.
    pub fn train_items_by_user(&self, log: &InteractionLog) -> Vec<Vec<usize>> {
        items_by_user(log, &self.train)
    }

    pub fn test_items_by_user(&self, log: &InteractionLog) -> Vec<Vec<usize>> {
        items_by_user(log, &self.test)
    }

    /// Train interaction count per item.
    pub fn train_popularity(&self, log: &InteractionLog) -> Vec<usize> {
        let mut pop = vec![0; log.n_items()];
        for &e in &self.train {
            pop[log.events()[e].item] += 1;
        }
        pop
    }
}

fn items_by_user(log: &InteractionLog, events: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); log.n_users()];
    for &e in events {
        let ev = log.events()[e];
        out[ev.user].push(ev.item);
    }
    for items in &mut out {
        items.sort_unstable();
    }
    out
}

/// `ceil(ratio * n)` that ignores floating-point noise just above an integer.
pub(crate) fn ceil_count(ratio: f64, n: usize) -> usize {
    let x = ratio * n as f64;
    let c = (x - 1e-9).ceil().max(0.0) as usize;
    c.min(n)
}

fn check_ratio(test_ratio: f64) -> Result<()> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(CorpusError::Argument(format!(
            "test_ratio must lie in (0, 1), got {test_ratio}"
        )));
    }
    Ok(())
}

pub fn split(log: &InteractionLog, strategy: SplitStrategy, test_ratio: f64, seed: u64) -> Result<SplitPlan> {
    if log.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let all: Vec<usize> = (0..log.len()).collect();
    let (train, test) = split_events(log, &all, strategy, test_ratio, seed)?;
    Ok(SplitPlan {
        train,
        test,
        strategy,
        test_ratio,
        seed,
        cold_items: BTreeSet::new(),
    })
}

/// Splits an arbitrary subset of event indices. Used both for the main
/// train/test split and for carving validation folds out of train.
pub fn split_events(
    log: &InteractionLog,
    subset: &[usize],
    strategy: SplitStrategy,
    test_ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_ratio(test_ratio)?;
    if subset.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let events = log.events();
    let mut test = match strategy {
        SplitStrategy::Random => {
            let mut idx = subset.to_vec();
            idx.sort_unstable();
            idx.shuffle(&mut seeded(seed));
            idx.truncate(ceil_count(test_ratio, subset.len()));
            idx
        }
        SplitStrategy::Temporal => {
            let mut idx = subset.to_vec();
            idx.sort_by_key(|&e| (events[e].timestamp, e));
            let n_test = ceil_count(test_ratio, idx.len());
            idx.split_off(idx.len() - n_test)
        }
        SplitStrategy::PerUser => {
            let mut by_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &e in subset {
                by_user.entry(events[e].user).or_default().push(e);
            }
            let mut test = Vec::new();
            for (_, mut evs) in by_user {
                evs.sort_by_key(|&e| (events[e].timestamp, e));
                let n = evs.len();
                let n_test = if n < 2 {
                    0
                } else {
                    ceil_count(test_ratio, n).min(n - 1)
                };
                test.extend_from_slice(&evs[n - n_test..]);
            }
            test
        }
    };
    test.sort_unstable();
    let test_set: BTreeSet<usize> = test.iter().copied().collect();
    let mut train: Vec<usize> = subset.iter().copied().filter(|e| !test_set.contains(e)).collect();
    train.sort_unstable();
    Ok((train, test))
}

/// Evicts every train event of a seeded sample of test items so those items
/// are unseen during training. Samples `ceil(fraction * |items with test
/// events|)` items.
pub fn simulate_cold_start(
    plan: &SplitPlan,
    log: &InteractionLog,
    item_fraction: f64,
    seed: u64,
) -> Result<SplitPlan> {
    if !(0.0..1.0).contains(&item_fraction) {
        return Err(CorpusError::Argument(format!(
            "cold-start item fraction must lie in [0, 1), got {item_fraction}"
        )));
    }
    if item_fraction == 0.0 {
        return Ok(plan.clone());
    }
    let events = log.events();
    let candidates: BTreeSet<usize> = plan.test.iter().map(|&e| events[e].item).collect();
    let mut candidates: Vec<usize> = candidates.into_iter().collect();
    candidates.shuffle(&mut seeded(seed));
    candidates.truncate(ceil_count(item_fraction, candidates.len()));
    let cold: BTreeSet<usize> = candidates.into_iter().collect();

    let (moved, train): (Vec<usize>, Vec<usize>) =
        plan.train.iter().partition(|&&e| cold.contains(&events[e].item));
    if train.is_empty() {
        return Err(CorpusError::DegenerateSplit(format!(
            "evicting {} cold items leaves no training events",
            cold.len()
        )));
    }
    let mut test = plan.test.clone();
    test.extend(moved);
    test.sort_unstable();
    let mut cold_items = plan.cold_items.clone();
    cold_items.extend(cold);
    Ok(SplitPlan {
        train,
        test,
        cold_items,
        ..plan.clone()
    })
}
