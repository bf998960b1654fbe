use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_user, dot, gaussian_vec, HyperParams, ModelError, Recommender, Result, TrainData};
use crate::rng::seeded;

/// Biased matrix factorization: `r = mu + b_u + b_i + p_u . q_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfModel {
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    pub mu: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    /// Row-major `n_users x dim`.
    pub p: Vec<f64>,
    /// Row-major `n_items x dim`.
    pub q: Vec<f64>,
    /// Objective value after each epoch.
    pub loss_trace: Vec<f64>,
}

impl MfModel {
    pub fn zeros(n_users: usize, n_items: usize, dim: usize) -> Self {
        Self {
            n_users,
            n_items,
            dim,
            mu: 0.0,
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
            p: vec![0.0; n_users * dim],
            q: vec![0.0; n_items * dim],
            loss_trace: Vec::new(),
        }
    }

    pub fn p_row(&self, u: usize) -> &[f64] {
        &self.p[u * self.dim..(u + 1) * self.dim]
    }

    pub fn q_row(&self, i: usize) -> &[f64] {
        &self.q[i * self.dim..(i + 1) * self.dim]
    }

    pub fn predict(&self, u: usize, i: usize) -> f64 {
        self.mu + self.user_bias[u] + self.item_bias[i] + dot(self.p_row(u), self.q_row(i))
    }

    /// Parameters in the order `mu, b_u, b_i, P, Q`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = vec![self.mu];
        v.extend(&self.user_bias);
        v.extend(&self.item_bias);
        v.extend(&self.p);
        v.extend(&self.q);
        v
    }

    pub fn set_flat_params(&mut self, v: &[f64]) {
        let (nu, ni) = (self.n_users, self.n_items);
        let (pd, qd) = (nu * self.dim, ni * self.dim);
        assert_eq!(v.len(), 1 + nu + ni + pd + qd, "flat parameter length");
        self.mu = v[0];
        let mut off = 1;
        for (dst, len) in [
            (&mut self.user_bias, nu),
            (&mut self.item_bias, ni),
            (&mut self.p, pd),
            (&mut self.q, qd),
        ] {
            dst.copy_from_slice(&v[off..off + len]);
            off += len;
        }
    }

    fn finite(&self) -> bool {
        self.mu.is_finite()
            && [&self.user_bias, &self.item_bias, &self.p, &self.q]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Regularized squared error over the observed ratings; the penalty applies
/// to the latent factors of each observed pair.
pub fn mf_objective(model: &MfModel, data: &TrainData, reg: f64) -> f64 {
    data.interactions
        .iter()
        .map(|&(u, i, r)| {
            let e = r - model.predict(u, i);
            let pu = model.p_row(u);
            let qi = model.q_row(i);
            e * e + reg * (dot(pu, pu) + dot(qi, qi))
        })
        .sum()
}

/// Gradient of [`mf_objective`] in [`MfModel::flat_params`] order.
pub fn mf_gradient(model: &MfModel, data: &TrainData, reg: f64) -> Vec<f64> {
    let mut g = MfModel::zeros(model.n_users, model.n_items, model.dim);
    let d = model.dim;
    for &(u, i, r) in &data.interactions {
        let e = r - model.predict(u, i);
        g.mu -= 2.0 * e;
        g.user_bias[u] -= 2.0 * e;
        g.item_bias[i] -= 2.0 * e;
        for k in 0..d {
            let (pk, qk) = (model.p[u * d + k], model.q[i * d + k]);
            g.p[u * d + k] += -2.0 * e * qk + 2.0 * reg * pk;
            g.q[i * d + k] += -2.0 * e * pk + 2.0 * reg * qk;
        }
    }
    g.flat_params()
}

/// Trains by per-sample SGD on [`mf_objective`], shuffling the observed
/// ratings each epoch.
pub fn train_mf(data: &TrainData, hp: &HyperParams) -> Result<MfModel> {
    hp.validate()?;
    if data.is_empty() {
        return Err(ModelError::Precondition("training set is empty".into()));
    }
    let d = hp.latent_dim;
    let mut rng = seeded(hp.seed);
    let mut model = MfModel::zeros(data.n_users, data.n_items, d);
    model.mu = data.interactions.iter().map(|t| t.2).sum::<f64>() / data.interactions.len() as f64;
    model.p = gaussian_vec(&mut rng, data.n_users * d, hp.init_std);
    model.q = gaussian_vec(&mut rng, data.n_items * d, hp.init_std);

    let lr = hp.learning_rate;
    let mut order: Vec<usize> = (0..data.interactions.len()).collect();
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        for &t in &order {
            let (u, i, r) = data.interactions[t];
            let e = r - model.predict(u, i);
            model.mu += lr * 2.0 * e;
            model.user_bias[u] += lr * 2.0 * e;
            model.item_bias[i] += lr * 2.0 * e;
            for k in 0..d {
                let pk = model.p[u * d + k];
                let qk = model.q[i * d + k];
                model.p[u * d + k] += lr * (2.0 * e * qk - 2.0 * hp.reg * pk);
                model.q[i * d + k] += lr * (2.0 * e * pk - 2.0 * hp.reg * qk);
            }
        }
        let loss = mf_objective(&model, data, hp.reg);
        if !loss.is_finite() || !model.finite() {
            return Err(ModelError::Divergence { epoch, learning_rate: lr });
        }
        log::debug!("mf epoch {epoch}: loss {loss:.6}");
        model.loss_trace.push(loss);
    }
    Ok(model)
}

impl Recommender for MfModel {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_all(&self, user: usize) -> Result<Vec<f64>> {
        check_user(user, self.n_users)?;
        Ok((0..self.n_items).map(|i| self.predict(user, i)).collect())
    }

    fn score(&self, user: usize, item: usize) -> Result<f64> {
        check_user(user, self.n_users)?;
        super::check_item(item, self.n_items)?;
        Ok(self.predict(user, item))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_latents_score_is_bias_sum() {
        let mut m = MfModel::zeros(2, 3, 4);
        m.mu = 3.5;
        m.user_bias = vec![0.25, -1.0];
        m.item_bias = vec![0.0, 0.5, -0.5];
        assert_eq!(m.score(1, 1).unwrap(), 3.0);
        assert_eq!(m.score(0, 2).unwrap(), 3.25);
        assert!(m.score(2, 0).is_err());
        assert!(m.score(0, 3).is_err());
    }

    #[test]
    fn constant_ratings_fix_the_global_bias() {
        let triples = (0..40).map(|k| (k % 5, k % 7, 4.0));
        let data = TrainData::from_triples(5, 7, triples);
        let hp = HyperParams {
            latent_dim: 1,
            learning_rate: 1e-4,
            reg: 0.0,
            epochs: 5,
            ..HyperParams::default()
        };
        let m = train_mf(&data, &hp).unwrap();
        assert!((m.mu - 4.0).abs() < 0.05);
        assert!(m.user_bias.iter().chain(&m.item_bias).all(|b| b.abs() < 0.05));
    }

    #[test]
    fn divergence_names_epoch_and_rate() {
        let triples = (0..30).map(|k| (k % 3, k % 4, (k % 5) as f64 * 100.0));
        let data = TrainData::from_triples(3, 4, triples);
        let hp = HyperParams {
            learning_rate: 50.0,
            init_std: 1.0,
            ..HyperParams::default()
        };
        match train_mf(&data, &hp) {
            Err(ModelError::Divergence { epoch, learning_rate }) => {
                assert!(epoch >= 1);
                assert_eq!(learning_rate, 50.0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let data = TrainData::from_triples(2, 2, []);
        assert!(matches!(train_mf(&data, &HyperParams::default()), Err(ModelError::Precondition(_))));
    }
}
