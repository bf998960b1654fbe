//! Recommender backbones: biased matrix factorization, the multinomial
//! variational autoencoder, and three content-aware pairwise-ranking models.

mod checkpoint;
mod content;
mod data;
mod hyper;
mod mf;
mod recommend;
mod vaecf;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{AnyModel, Checkpoint};
pub use content::{
    bpr_gradient, bpr_objective, item_features_for, sample_triples, train_content, BprTriple,
    ContentModel, ContentParams, ContentVariant, FeatureMatrix, ItemFeatures,
};
pub use data::TrainData;
pub use hyper::HyperParams;
pub use mf::{mf_gradient, mf_objective, train_mf, MfModel};
pub use recommend::{popularity_ranking, recommend_for_user, recommend_topk, RankedList};
pub use vaecf::{gaussian_kl, train_vaecf, vaecf_loss_and_grad, VaecfModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Divergence { epoch: usize, learning_rate: f64 },
    #[error("item {0} has no feature row")]
    MissingFeature(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    #[serde(alias = "cf")]
    Mf,
    Vaecf,
    Vbpr,
    Vmf,
    Amr,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::Mf,
        ModelFamily::Vaecf,
        ModelFamily::Vbpr,
        ModelFamily::Vmf,
        ModelFamily::Amr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Mf => "mf",
            ModelFamily::Vaecf => "vaecf",
            ModelFamily::Vbpr => "vbpr",
            ModelFamily::Vmf => "vmf",
            ModelFamily::Amr => "amr",
        }
    }

    /// Whether the family consumes item side information.
    pub fn uses_features(self) -> bool {
        matches!(self, ModelFamily::Vbpr | ModelFamily::Vmf | ModelFamily::Amr)
    }

    pub fn content_variant(self) -> Option<ContentVariant> {
        match self {
            ModelFamily::Vbpr => Some(ContentVariant::Vbpr),
            ModelFamily::Vmf => Some(ContentVariant::Vmf),
            ModelFamily::Amr => Some(ContentVariant::Amr),
            _ => None,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" | "cf" => Ok(ModelFamily::Mf),
            "vaecf" => Ok(ModelFamily::Vaecf),
            "vbpr" => Ok(ModelFamily::Vbpr),
            "vmf" => Ok(ModelFamily::Vmf),
            "amr" => Ok(ModelFamily::Amr),
            other => Err(ModelError::Argument(format!(
                "unknown model family {other:?}; expected one of mf, vaecf, vbpr, vmf, amr"
            ))),
        }
    }
}

/// Read-only scoring interface shared by every trained backbone.
pub trait Recommender: Send + Sync {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;

    /// Scores of every catalog item for `user`, in item-index order.
    fn score_all(&self, user: usize) -> Result<Vec<f64>>;

    fn score(&self, user: usize, item: usize) -> Result<f64> {
        check_item(item, self.n_items())?;
        Ok(self.score_all(user)?[item])
    }

    /// True when the model produces meaningful scores for users without
    /// training events.
    fn handles_cold_users(&self) -> bool {
        false
    }
}

pub(crate) fn check_user(user: usize, n_users: usize) -> Result<()> {
    if user >= n_users {
        return Err(ModelError::Argument(format!(
            "user index {user} out of range (n_users = {n_users})"
        )));
    }
    Ok(())
}

pub(crate) fn check_item(item: usize, n_items: usize) -> Result<()> {
    if item >= n_items {
        return Err(ModelError::Argument(format!(
            "item index {item} out of range (n_items = {n_items})"
        )));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln(sigmoid(x))`, stable for large `|x|`.
pub(crate) fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub(crate) fn gaussian_vec(rng: &mut crate::rng::SeededRng, len: usize, std: f64) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, std).expect("valid normal std");
    (0..len).map(|_| normal.sample(rng)).collect()
}
