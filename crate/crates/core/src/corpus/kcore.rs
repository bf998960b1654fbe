use super::{CorpusError, InteractionLog, Result};

/// Iteratively drops users and items with fewer than `k` events until every
/// survivor meets the bound. Vocabularies are re-densified.
pub fn k_core_filter(log: &InteractionLog, k: usize) -> Result<InteractionLog> {
    if k == 0 {
        return Err(CorpusError::Argument("k must be at least 1".into()));
    }
    let mut alive = vec![true; log.len()];
    loop {
        let mut udeg = vec![0usize; log.n_users()];
        let mut ideg = vec![0usize; log.n_items()];
        for (ev, _) in log.events().iter().zip(&alive).filter(|(_, a)| **a) {
            udeg[ev.user] += 1;
            ideg[ev.item] += 1;
        }
        let mut changed = false;
        for (ev, a) in log.events().iter().zip(alive.iter_mut()) {
            if *a && (udeg[ev.user] < k || ideg[ev.item] < k) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !alive.iter().any(|&a| a) {
        return Err(CorpusError::EmptyAfterFilter { k });
    }
    Ok(log.retain_events(|idx, _| alive[idx]))
}
