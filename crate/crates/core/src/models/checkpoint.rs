use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContentModel, HyperParams, MfModel, ModelError, ModelFamily, Recommender, Result, VaecfModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyModel {
    Mf(MfModel),
    Vaecf(VaecfModel),
    Content(ContentModel),
}

impl AnyModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            AnyModel::Mf(_) => ModelFamily::Mf,
            AnyModel::Vaecf(_) => ModelFamily::Vaecf,
            AnyModel::Content(m) => match m.variant {
                super::ContentVariant::Vbpr => ModelFamily::Vbpr,
                super::ContentVariant::Vmf => ModelFamily::Vmf,
                super::ContentVariant::Amr => ModelFamily::Amr,
            },
        }
    }

    fn inner(&self) -> &dyn Recommender {
        match self {
            AnyModel::Mf(m) => m,
            AnyModel::Vaecf(m) => m,
            AnyModel::Content(m) => m,
        }
    }
}

impl Recommender for AnyModel {
    fn n_users(&self) -> usize {
        self.inner().n_users()
    }

    fn n_items(&self) -> usize {
        self.inner().n_items()
    }

    fn score_all(&self, user: usize) -> Result<Vec<f64>> {
        self.inner().score_all(user)
    }

    fn score(&self, user: usize, item: usize) -> Result<f64> {
        self.inner().score(user, item)
    }

    fn handles_cold_users(&self) -> bool {
        self.inner().handles_cold_users()
    }
}

/// Versioned JSON record of a trained model and its settings. Floats are
/// written in shortest round-trip form, so a reload is bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub hyper: HyperParams,
    pub model: AnyModel,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(hyper: HyperParams, model: AnyModel) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            hyper,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| ModelError::Io { path: path.display().to_string(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        serde_json::to_writer(&mut w, self).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |source| ModelError::Io { path: path.display().to_string(), source };
        let r = BufReader::new(File::open(path).map_err(io)?);
        let ck: Self = serde_json::from_reader(r).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.format_version != Self::FORMAT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format version {} (expected {})",
                ck.format_version,
                Self::FORMAT_VERSION
            )));
        }
        Ok(ck)
    }
}
