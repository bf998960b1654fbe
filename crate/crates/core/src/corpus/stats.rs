use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CorpusError, InteractionLog, Result};

/// Summary counts of a corpus. `density` is the raw fraction
/// `|R| / (|U| * |I|)`, not a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_interactions: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub avg_per_user: f64,
    pub avg_per_item: f64,
    pub density: f64,
}

pub fn dataset_stats(log: &InteractionLog) -> Result<DatasetStats> {
    if log.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n_users = log.user_degrees().iter().filter(|&&d| d > 0).count();
    let n_items = log.item_degrees().iter().filter(|&&d| d > 0).count();
    let n = log.len();
    Ok(DatasetStats {
        n_interactions: n,
        n_users,
        n_items,
        avg_per_user: n as f64 / n_users as f64,
        avg_per_item: n as f64 / n_items as f64,
        density: n as f64 / (n_users as f64 * n_items as f64),
    })
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "interactions\t{}", self.n_interactions)?;
        writeln!(f, "users\t{}", self.n_users)?;
        writeln!(f, "items\t{}", self.n_items)?;
        writeln!(f, "avg_per_user\t{:.2}", self.avg_per_user)?;
        writeln!(f, "avg_per_item\t{:.2}", self.avg_per_item)?;
        write!(f, "density\t{:.6}", self.density)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_event() {
        let log = InteractionLog::from_records([("u", "i", 1.0, 0)]);
        let s = dataset_stats(&log).unwrap();
        assert_eq!(s.density, 1.0);
        assert_eq!(s.avg_per_user, 1.0);
        assert_eq!(s.avg_per_item, 1.0);
    }

    #[test]
    fn two_by_three_half_density() {
        let log = InteractionLog::from_records([
            ("u1", "a", 1.0, 0),
            ("u1", "b", 1.0, 0),
            ("u2", "c", 1.0, 0),
        ]);
        let s = dataset_stats(&log).unwrap();
        assert_eq!((s.n_interactions, s.n_users, s.n_items), (3, 2, 3));
        assert_eq!(s.density, 0.5);
        assert_eq!(s.avg_per_user, 1.5);
        assert_eq!(s.avg_per_item, 1.0);
    }

    #[test]
    fn merged_corpus_table_values() {
        // counts from the published merged MovieLens-1M corpus
        let (r, u, i) = (632_397f64, 6_040f64, 992f64);
        assert_eq!(format!("{:.2}", r / u), "104.70");
        assert_eq!(format!("{:.2}", r / i), "637.50");
        assert_eq!(format!("{:.4}", r / (u * i)), "0.1055");
    }
}
