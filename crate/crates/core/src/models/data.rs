use crate::corpus::InteractionLog;

/// Training interactions in model index space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub n_users: usize,
    pub n_items: usize,
    /// `(user, item, rating)` in event order.
    pub interactions: Vec<(usize, usize, f64)>,
    /// Sorted, de-duplicated train items per user.
    pub user_items: Vec<Vec<usize>>,
}

impl TrainData {
    pub fn from_events(log: &InteractionLog, events: &[usize]) -> Self {
        let triples = events.iter().map(|&e| {
            let ev = log.events()[e];
            (ev.user, ev.item, ev.rating)
        });
        Self::from_triples(log.n_users(), log.n_items(), triples)
    }

    pub fn from_triples(
        n_users: usize,
        n_items: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let interactions: Vec<_> = triples.into_iter().collect();
        let mut user_items = vec![Vec::new(); n_users];
        for &(u, i, _) in &interactions {
            user_items[u].push(i);
        }
        for items in &mut user_items {
            items.sort_unstable();
            items.dedup();
        }
        Self {
            n_users,
            n_items,
            interactions,
            user_items,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn item_popularity(&self) -> Vec<usize> {
        let mut pop = vec![0; self.n_items];
        for &(_, i, _) in &self.interactions {
            pop[i] += 1;
        }
        pop
    }

    pub fn has_item(&self, user: usize, item: usize) -> bool {
        self.user_items[user].binary_search(&item).is_ok()
    }
}
