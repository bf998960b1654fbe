use serde::{Deserialize, Serialize};

use super::{ModelError, ModelFamily, Result};

/// Training settings shared by all backbones. Fields that a family does not
/// use are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub epochs: usize,
    /// Users per VAECF mini-batch.
    pub batch_size: usize,
    /// Negatives drawn per positive for pairwise training.
    pub negatives: usize,
    /// KL weight (VAECF).
    pub beta: f64,
    pub hidden_dim: usize,
    pub z_dim: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            learning_rate: 0.01,
            reg: 0.001,
            epochs: 20,
            batch_size: 32,
            negatives: 1,
            beta: 1.0,
            hidden_dim: 64,
            z_dim: 16,
            init_std: 0.01,
            seed: 42,
        }
    }
}

impl HyperParams {
    pub fn default_for(family: ModelFamily) -> Self {
        let base = Self::default();
        match family {
            ModelFamily::Mf => Self {
                learning_rate: 0.01,
                reg: 0.01,
                ..base
            },
            ModelFamily::Vaecf => Self {
                learning_rate: 0.005,
                reg: 0.0,
                ..base
            },
            ModelFamily::Vbpr | ModelFamily::Vmf | ModelFamily::Amr => Self {
                learning_rate: 0.05,
                reg: 0.001,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(ModelError::Argument(format!("{what} must be positive")));
        if self.latent_dim == 0 {
            return bad("latent_dim");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(ModelError::Argument("reg must be non-negative".into()));
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.negatives == 0 {
            return bad("negatives");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ModelError::Argument("beta must be non-negative".into()));
        }
        if self.hidden_dim == 0 || self.z_dim == 0 {
            return bad("hidden_dim and z_dim");
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(ModelError::Argument("init_std must be non-negative".into()));
        }
        Ok(())
    }

    /// Sets a numeric field by name; used by grid search.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(ModelError::Argument(format!("{name} must be a non-negative integer, got {v}")))
            }
        };
        match name {
            "latent_dim" => self.latent_dim = as_count(value)?,
            "learning_rate" => self.learning_rate = value,
            "reg" => self.reg = value,
            "epochs" => self.epochs = as_count(value)?,
            "batch_size" => self.batch_size = as_count(value)?,
            "negatives" => self.negatives = as_count(value)?,
            "beta" => self.beta = value,
            "hidden_dim" => self.hidden_dim = as_count(value)?,
            "z_dim" => self.z_dim = as_count(value)?,
            "init_std" => self.init_std = value,
            other => {
                return Err(ModelError::Argument(format!("unknown hyper-parameter {other:?}")))
            }
        }
        Ok(())
    }
}
