use super::{Averaged, EvalContext, Result};
use crate::models::RankedList;

/// Visits each list whose user has held-out items with its top-K and the
/// sorted relevant set; returns the mean of `term`.
fn per_user(
    lists: &[RankedList],
    ctx: &EvalContext,
    term: impl Fn(&[usize], &[usize]) -> f64,
) -> Result<Averaged> {
    ctx.check()?;
    let (mut sum, mut included, mut excluded) = (0.0, 0, 0);
    for l in lists {
        let rel = ctx.relevant.get(l.user).map(Vec::as_slice).unwrap_or(&[]);
        if rel.is_empty() {
            excluded += 1;
            continue;
        }
        sum += term(ctx.top(l), rel);
        included += 1;
    }
    Ok(Averaged::from_terms(sum, included, excluded))
}

fn hits(top: &[usize], rel: &[usize]) -> usize {
    top.iter().filter(|i| rel.binary_search(i).is_ok()).count()
}

/// Mean of `|top-K ∩ relevant| / min(K, |relevant|)`.
pub fn recall_at_k(lists: &[RankedList], ctx: &EvalContext) -> Result<Averaged> {
    per_user(lists, ctx, |top, rel| hits(top, rel) as f64 / ctx.k.min(rel.len()) as f64)
}

/// Binary-gain nDCG with a `log2(pos + 1)` discount.
pub fn ndcg_at_k(lists: &[RankedList], ctx: &EvalContext) -> Result<Averaged> {
    per_user(lists, ctx, |top, rel| {
        let dcg: f64 = top
            .iter()
            .enumerate()
            .filter(|(_, i)| rel.binary_search(i).is_ok())
            .map(|(p, _)| 1.0 / ((p + 2) as f64).log2())
            .sum();
        let idcg: f64 = (0..ctx.k.min(rel.len())).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
        dcg / idcg
    })
}

/// Share of users with at least one relevant item in their top-K.
pub fn hitrate_at_k(lists: &[RankedList], ctx: &EvalContext) -> Result<Averaged> {
    per_user(lists, ctx, |top, rel| if hits(top, rel) > 0 { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(user: usize, items: &[usize]) -> RankedList {
        RankedList {
            user,
            items: items.to_vec(),
            scores: vec![0.0; items.len()],
        }
    }

    fn ctx(k: usize, relevant: Vec<Vec<usize>>) -> EvalContext {
        EvalContext {
            k,
            relevant,
            ..EvalContext::default()
        }
    }

    #[test]
    fn recall_examples() {
        let c = ctx(10, vec![vec![1, 2], vec![0], vec![3, 4], vec![5]]);
        let r = recall_at_k(&[list(0, &[1, 7, 8])], &c).unwrap();
        assert_eq!(r.value, Some(0.5));
        let r = recall_at_k(&[list(0, &[2, 1])], &c).unwrap();
        assert_eq!(r.value, Some(1.0));
        let r = recall_at_k(&[list(1, &[0]), list(2, &[3]), list(3, &[9])], &c).unwrap();
        assert_eq!(r.value, Some(0.5));
    }

    #[test]
    fn recall_is_capped_at_k() {
        let c = ctx(2, vec![vec![0, 1, 2, 3]]);
        assert_eq!(recall_at_k(&[list(0, &[0, 1, 2])], &c).unwrap().value, Some(1.0));
    }

    #[test]
    fn users_without_relevance_are_counted() {
        let c = ctx(10, vec![vec![1], vec![]]);
        let r = recall_at_k(&[list(0, &[1]), list(1, &[1])], &c).unwrap();
        assert_eq!((r.value, r.included, r.excluded), (Some(1.0), 1, 1));
        let r = recall_at_k(&[list(1, &[1])], &c).unwrap();
        assert_eq!(r.value, None);
    }

    #[test]
    fn ndcg_examples() {
        let c = ctx(10, vec![vec![5], vec![0, 1]]);
        assert_eq!(ndcg_at_k(&[list(0, &[5, 1])], &c).unwrap().value, Some(1.0));
        assert_eq!(ndcg_at_k(&[list(0, &[1, 2, 5])], &c).unwrap().value, Some(0.5));
        assert_eq!(ndcg_at_k(&[list(1, &[1, 0])], &c).unwrap().value, Some(1.0));
    }

    #[test]
    fn hitrate_examples() {
        let c = ctx(10, vec![vec![1], vec![2], vec![3], vec![4]]);
        let lists = [list(0, &[1]), list(1, &[2]), list(2, &[3]), list(3, &[0])];
        assert_eq!(hitrate_at_k(&lists, &c).unwrap().value, Some(0.75));
        assert_eq!(hitrate_at_k(&lists[..3], &c).unwrap().value, Some(1.0));
        assert_eq!(hitrate_at_k(&lists[3..], &c).unwrap().value, Some(0.0));
    }
}
