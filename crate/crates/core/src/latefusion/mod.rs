//! Rank-level fusion of ranked lists produced by independent recommenders.

mod interchange;
mod rules;
mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use interchange::{
    aggregate_lists, lists_by_user, read_interchange, write_interchange, InterchangeRow,
};
pub use rules::{aggregate, average_rank, borda, rrf, weighted_borda};
pub use weights::WeightSchedule;

#[derive(Debug, Error)]
pub enum LateFusionError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, LateFusionError>;

pub const DEFAULT_RRF_K: u32 = 60;

/// Rank assigned to an item that a system's list does not contain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingRank {
    /// One past the end of that system's list.
    #[default]
    ListLenPlusOne,
    /// The catalog size, as if the list were a full ranking.
    CatalogSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationRule {
    Borda,
    #[serde(alias = "wborda")]
    WeightedBorda,
    #[serde(alias = "avgrank")]
    AverageRank,
    Rrf,
}

impl AggregationRule {
    pub const ALL: [AggregationRule; 4] = [
        AggregationRule::Borda,
        AggregationRule::WeightedBorda,
        AggregationRule::AverageRank,
        AggregationRule::Rrf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationRule::Borda => "borda",
            AggregationRule::WeightedBorda => "weighted_borda",
            AggregationRule::AverageRank => "average_rank",
            AggregationRule::Rrf => "rrf",
        }
    }

    /// Command-line spelling.
    pub fn short_name(self) -> &'static str {
        match self {
            AggregationRule::Borda => "borda",
            AggregationRule::WeightedBorda => "wborda",
            AggregationRule::AverageRank => "avgrank",
            AggregationRule::Rrf => "rrf",
        }
    }
}

impl std::str::FromStr for AggregationRule {
    type Err = LateFusionError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s || r.short_name() == s)
            .ok_or_else(|| LateFusionError::Argument(format!("unknown aggregation rule {s:?}")))
    }
}

/// The ranked lists of `M` systems for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    pub user: usize,
    /// Item indices, best first, one list per system.
    pub lists: Vec<Vec<usize>>,
    pub catalog_size: usize,
    /// Per-system weights for weighted Borda.
    pub weights: Option<Vec<f64>>,
    pub rrf_k: u32,
    pub missing_rank: MissingRank,
}

impl FusionInput {
    pub fn new(user: usize, lists: Vec<Vec<usize>>, catalog_size: usize) -> Self {
        Self {
            user,
            lists,
            catalog_size,
            weights: None,
            rrf_k: DEFAULT_RRF_K,
            missing_rank: MissingRank::default(),
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }
}

/// Fused order for one user; `fused_scores` are in the rule's own units
/// (mean rank for average rank, larger-is-better otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRanking {
    pub user: usize,
    pub items: Vec<usize>,
    pub fused_scores: Vec<f64>,
}

impl MetaRanking {
    pub fn truncate(&mut self, n: usize) {
        self.items.truncate(n);
        self.fused_scores.truncate(n);
    }
}
