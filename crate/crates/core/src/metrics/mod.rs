//! Accuracy and beyond-accuracy metrics over per-user top-K lists.

mod accuracy;
mod beyond;
mod tradeoff;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use accuracy::{hitrate_at_k, ndcg_at_k, recall_at_k};
pub use beyond::{calibration_bias_at_k, coldrate_at_k, coverage_at_k, ild_at_k, novelty_at_k};
pub use tradeoff::tradeoff_auc;

use crate::models::RankedList;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("item {0} has no feature row")]
    MissingFeature(String),
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

pub const DEFAULT_K: usize = 10;

/// Which population the cold-start rate is measured over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdRateMode {
    /// Share of recommended slots holding items without training events.
    #[default]
    Item,
    /// Share of evaluated users without training events.
    User,
}

/// Everything the metrics need besides the lists themselves. Per-user
/// vectors are indexed by user index, per-item vectors by item index.
#[derive(Debug, Clone, Default)]
pub struct EvalContext {
    pub k: usize,
    pub catalog_size: usize,
    /// Held-out relevant items per user, sorted.
    pub relevant: Vec<Vec<usize>>,
    /// Training interactions per item.
    pub popularity: Vec<usize>,
    /// Training items per user, sorted.
    pub history: Vec<Vec<usize>>,
    /// Feature row per item, for diversity.
    pub features: Option<Vec<Option<Vec<f64>>>>,
    /// Genre indices per item; an item's mass is split evenly among them.
    pub item_genres: Option<Vec<Vec<usize>>>,
    /// External ids for error messages.
    pub item_ids: Option<Vec<String>>,
    pub cold_mode: ColdRateMode,
}

impl EvalContext {
    pub(crate) fn top<'a>(&self, list: &'a RankedList) -> &'a [usize] {
        &list.items[..list.items.len().min(self.k)]
    }

    pub(crate) fn item_name(&self, i: usize) -> String {
        self.item_ids
            .as_ref()
            .and_then(|ids| ids.get(i).cloned())
            .unwrap_or_else(|| format!("#{i}"))
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.k == 0 {
            return Err(MetricError::Argument("cutoff K must be positive".into()));
        }
        Ok(())
    }
}

/// A mean over users together with how many users were left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averaged {
    /// Absent when no user qualified.
    pub value: Option<f64>,
    pub included: usize,
    pub excluded: usize,
}

impl Averaged {
    pub(crate) fn from_terms(sum: f64, included: usize, excluded: usize) -> Self {
        Self {
            value: (included > 0).then(|| sum / included as f64),
            included,
            excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub hitrate: Option<f64>,
    pub coverage: Option<f64>,
    pub coldrate: Option<f64>,
    pub novelty: Option<f64>,
    pub ild: Option<f64>,
    pub calibration_bias: Option<f64>,
    pub n_lists: usize,
    /// Users left out of accuracy metrics for lack of held-out items.
    pub users_without_relevance: usize,
    /// Users left out of calibration for lack of genre-tagged history.
    pub users_without_history: usize,
}

impl MetricReport {
    pub const NAMES: [&'static str; 8] = [
        "recall",
        "ndcg",
        "hitrate",
        "coverage",
        "coldrate",
        "novelty",
        "ild",
        "calibration_bias",
    ];

    /// Looks up a metric by name, with or without an `@K` suffix matching
    /// this report's cutoff.
    pub fn get(&self, name: &str) -> Option<f64> {
        let base = match name.split_once('@') {
            Some((b, k)) if k.parse::<usize>().ok() == Some(self.k) => b,
            Some(_) => return None,
            None => name,
        };
        match base {
            "recall" => self.recall,
            "ndcg" => self.ndcg,
            "hitrate" => self.hitrate,
            "coverage" => self.coverage,
            "coldrate" => self.coldrate,
            "novelty" => self.novelty,
            "ild" => self.ild,
            "calibration_bias" => self.calibration_bias,
            _ => None,
        }
    }
}

/// Computes every metric the context supports. Diversity and calibration
/// are absent when features or genres are not supplied.
pub fn evaluate(lists: &[RankedList], ctx: &EvalContext) -> Result<MetricReport> {
    let recall = recall_at_k(lists, ctx)?;
    let calibration = match ctx.item_genres {
        Some(_) => Some(calibration_bias_at_k(lists, ctx)?),
        None => None,
    };
    Ok(MetricReport {
        k: ctx.k,
        recall: recall.value,
        ndcg: ndcg_at_k(lists, ctx)?.value,
        hitrate: hitrate_at_k(lists, ctx)?.value,
        coverage: coverage_at_k(lists, ctx)?.value,
        coldrate: coldrate_at_k(lists, ctx)?.value,
        novelty: novelty_at_k(lists, ctx)?.value,
        ild: match ctx.features {
            Some(_) => ild_at_k(lists, ctx)?.value,
            None => None,
        },
        calibration_bias: calibration.and_then(|c| c.value),
        n_lists: lists.len(),
        users_without_relevance: recall.excluded,
        users_without_history: calibration.map_or(0, |c| c.excluded),
    })
}
