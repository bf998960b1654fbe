use serde::{Deserialize, Serialize};

use super::{LateFusionError, Result};

/// How per-system weights for weighted Borda are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum WeightSchedule {
    /// `1 / M` each.
    Uniform,
    /// Proportional to `M - m` for the `m`-th system (0-based).
    Linear,
    /// Proportional to each system's validation score.
    Proportional,
    /// Used as given after validation.
    Explicit { weights: Vec<f64> },
}

impl WeightSchedule {
    /// Weights for `m` systems; `validation` holds one score per system and
    /// is only read by [`WeightSchedule::Proportional`].
    pub fn weights(&self, m: usize, validation: Option<&[f64]>) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(LateFusionError::Argument("no systems to weight".into()));
        }
        let normalize = |raw: Vec<f64>| -> Vec<f64> {
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        };
        match self {
            WeightSchedule::Uniform => Ok(vec![1.0 / m as f64; m]),
            WeightSchedule::Linear => Ok(normalize((0..m).map(|k| (m - k) as f64).collect())),
            WeightSchedule::Proportional => {
                let v = validation.ok_or_else(|| {
                    LateFusionError::Argument("proportional weights need validation scores".into())
                })?;
                if v.len() != m {
                    return Err(LateFusionError::Argument(format!(
                        "{} validation scores for {m} systems",
                        v.len()
                    )));
                }
                if v.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                    return Err(LateFusionError::Argument(
                        "validation scores must be finite and non-negative".into(),
                    ));
                }
                if v.iter().all(|&x| x == 0.0) {
                    return Ok(vec![1.0 / m as f64; m]);
                }
                Ok(normalize(v.to_vec()))
            }
            WeightSchedule::Explicit { weights } => {
                if weights.len() != m {
                    return Err(LateFusionError::Argument(format!(
                        "{} explicit weights for {m} systems",
                        weights.len()
                    )));
                }
                Ok(weights.clone())
            }
        }
    }
}
