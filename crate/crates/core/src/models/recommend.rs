use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{check_user, ModelError, Recommender, Result};

/// Top-N list for one user; scores are non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn by_score_then_index(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Sorts non-excluded items by descending score (ascending index on ties)
/// and keeps the first `n`.
pub(crate) fn top_n(user: usize, scores: &[f64], n: usize, exclude: &[usize]) -> Result<RankedList> {
    if n == 0 {
        return Err(ModelError::Argument("list length n must be positive".into()));
    }
    let mut keep = vec![true; scores.len()];
    for &i in exclude {
        if let Some(k) = keep.get_mut(i) {
            *k = false;
        }
    }
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&i| keep[i]).collect();
    let cmp = by_score_then_index(scores);
    if cand.len() > n {
        cand.select_nth_unstable_by(n - 1, &cmp);
        cand.truncate(n);
    }
    cand.sort_unstable_by(&cmp);
    Ok(RankedList {
        user,
        scores: cand.iter().map(|&i| scores[i]).collect(),
        items: cand,
    })
}

pub fn recommend_topk(
    model: &dyn Recommender,
    user: usize,
    n: usize,
    exclude: &[usize],
) -> Result<RankedList> {
    let scores = model.score_all(user)?;
    top_n(user, &scores, n, exclude)
}

/// Ranks items by training popularity.
pub fn popularity_ranking(popularity: &[usize], user: usize, n: usize, exclude: &[usize]) -> Result<RankedList> {
    let scores: Vec<f64> = popularity.iter().map(|&c| c as f64).collect();
    top_n(user, &scores, n, exclude)
}

/// Top-N for `user` with the cold-user policy applied: a user without
/// training items gets the popularity ranking unless the model handles
/// such users itself.
pub fn recommend_for_user(
    model: &dyn Recommender,
    user: usize,
    n: usize,
    train_items: &[usize],
    popularity: &[usize],
) -> Result<RankedList> {
    check_user(user, model.n_users())?;
    if train_items.is_empty() && !model.handles_cold_users() {
        return popularity_ranking(popularity, user, n, train_items);
    }
    recommend_topk(model, user, n, train_items)
}
