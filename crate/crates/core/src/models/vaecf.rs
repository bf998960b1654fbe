use std::ops::Range;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_user, gaussian_vec, HyperParams, ModelError, Recommender, Result, TrainData};
use crate::rng::{seeded, SeededRng};

/// `KL(N(mu, exp(logvar)) || N(0, I))` for a diagonal Gaussian.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Multinomial variational autoencoder over binary interaction vectors.
///
/// Encoder: `|I| -> hidden (tanh) -> (mean, log-variance)` of size `z_dim`
/// each. Decoder: `z -> |I|` logits fed to a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaecfModel {
    pub n_users: usize,
    pub n_items: usize,
    pub hidden: usize,
    pub z_dim: usize,
    pub beta: f64,
    /// All weights, laid out as encoder input rows (`n_items x hidden`),
    /// hidden bias, mean head (`z_dim x hidden`) and bias, log-variance head
    /// and bias, decoder rows (`n_items x z_dim`), decoder bias.
    pub theta: Vec<f64>,
    /// Train items per user, used as the encoder input at scoring time.
    pub inputs: Vec<Vec<usize>>,
    /// Sampled ELBO after each epoch.
    pub elbo_trace: Vec<f64>,
}

struct Layout {
    enc: Range<usize>,
    b1: Range<usize>,
    wmu: Range<usize>,
    bmu: Range<usize>,
    wlv: Range<usize>,
    blv: Range<usize>,
    dec: Range<usize>,
    bd: Range<usize>,
}

impl Layout {
    fn new(n_items: usize, hidden: usize, z: usize) -> Self {
        let mut off = 0;
        let mut take = |len: usize| {
            let r = off..off + len;
            off += len;
            r
        };
        Self {
            enc: take(n_items * hidden),
            b1: take(hidden),
            wmu: take(z * hidden),
            bmu: take(z),
            wlv: take(z * hidden),
            blv: take(z),
            dec: take(n_items * z),
            bd: take(n_items),
        }
    }

    fn len(&self) -> usize {
        self.bd.end
    }
}

struct Forward {
    h: Vec<f64>,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    z: Vec<f64>,
    logits: Vec<f64>,
}

impl VaecfModel {
    /// Randomly initialized model with the given training inputs.
    pub fn init(data: &TrainData, hp: &HyperParams) -> Result<Self> {
        hp.validate()?;
        let layout = Layout::new(data.n_items, hp.hidden_dim, hp.z_dim);
        let mut rng = seeded(hp.seed);
        let mut theta = gaussian_vec(&mut rng, layout.len(), hp.init_std);
        for r in [&layout.b1, &layout.bmu, &layout.blv, &layout.bd] {
            theta[r.clone()].fill(0.0);
        }
        Ok(Self {
            n_users: data.n_users,
            n_items: data.n_items,
            hidden: hp.hidden_dim,
            z_dim: hp.z_dim,
            beta: hp.beta,
            theta,
            inputs: data.user_items.clone(),
            elbo_trace: Vec::new(),
        })
    }

    fn layout(&self) -> Layout {
        Layout::new(self.n_items, self.hidden, self.z_dim)
    }

    fn forward(&self, items: &[usize], eps: Option<&[f64]>) -> Forward {
        let l = self.layout();
        let (hd, zd) = (self.hidden, self.z_dim);
        let t = &self.theta;
        let mut a = t[l.b1.clone()].to_vec();
        for &i in items {
            let row = &t[l.enc.start + i * hd..l.enc.start + (i + 1) * hd];
            for (ah, w) in a.iter_mut().zip(row) {
                *ah += w;
            }
        }
        let h: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
        let head = |w: &Range<usize>, b: &Range<usize>| -> Vec<f64> {
            (0..zd)
                .map(|k| {
                    let row = &t[w.start + k * hd..w.start + (k + 1) * hd];
                    t[b.start + k] + super::dot(row, &h)
                })
                .collect()
        };
        let mu = head(&l.wmu, &l.bmu);
        let logvar = head(&l.wlv, &l.blv);
        let z: Vec<f64> = match eps {
            Some(e) => (0..zd).map(|k| mu[k] + (0.5 * logvar[k]).exp() * e[k]).collect(),
            None => mu.clone(),
        };
        let logits = (0..self.n_items)
            .map(|i| t[l.bd.start + i] + super::dot(&t[l.dec.start + i * zd..l.dec.start + (i + 1) * zd], &z))
            .collect();
        Forward { h, mu, logvar, z, logits }
    }

    /// Sum over users of the multinomial log-likelihood of their train items
    /// at the posterior mean.
    pub fn reconstruction_log_likelihood(&self) -> f64 {
        self.inputs
            .iter()
            .filter(|x| !x.is_empty())
            .map(|x| {
                let f = self.forward(x, None);
                let lse = log_sum_exp(&f.logits);
                x.iter().map(|&i| f.logits[i] - lse).sum::<f64>()
            })
            .sum()
    }

    /// Loss and gradient for one user with a fixed noise draw; the gradient
    /// is accumulated into `grad`.
    fn user_loss_grad(&self, items: &[usize], eps: &[f64], beta: f64, grad: &mut [f64]) -> f64 {
        let l = self.layout();
        let (hd, zd, ni) = (self.hidden, self.z_dim, self.n_items);
        let t = &self.theta;
        let f = self.forward(items, Some(eps));
        let lse = log_sum_exp(&f.logits);
        let ll: f64 = items.iter().map(|&i| f.logits[i] - lse).sum();
        let kl = gaussian_kl(&f.mu, &f.logvar);

        let n = items.len() as f64;
        let mut dlogits: Vec<f64> = f.logits.iter().map(|&v| n * (v - lse).exp()).collect();
        for &i in items {
            dlogits[i] -= 1.0;
        }
        let mut dz = vec![0.0; zd];
        for i in 0..ni {
            let g = dlogits[i];
            grad[l.bd.start + i] += g;
            let base = l.dec.start + i * zd;
            for k in 0..zd {
                grad[base + k] += g * f.z[k];
                dz[k] += t[base + k] * g;
            }
        }
        let mut dh = vec![0.0; hd];
        for k in 0..zd {
            let std = (0.5 * f.logvar[k]).exp();
            let dmu = dz[k] + beta * f.mu[k];
            let dlv = dz[k] * eps[k] * 0.5 * std + beta * 0.5 * (f.logvar[k].exp() - 1.0);
            grad[l.bmu.start + k] += dmu;
            grad[l.blv.start + k] += dlv;
            let (wm, wv) = (l.wmu.start + k * hd, l.wlv.start + k * hd);
            for j in 0..hd {
                grad[wm + j] += dmu * f.h[j];
                grad[wv + j] += dlv * f.h[j];
                dh[j] += t[wm + j] * dmu + t[wv + j] * dlv;
            }
        }
        let da: Vec<f64> = dh.iter().zip(&f.h).map(|(g, h)| g * (1.0 - h * h)).collect();
        for j in 0..hd {
            grad[l.b1.start + j] += da[j];
        }
        for &i in items {
            let base = l.enc.start + i * hd;
            for j in 0..hd {
                grad[base + j] += da[j];
            }
        }
        -ll + beta * kl
    }

    fn finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Negative ELBO summed over `users`, with `noise[k]` the reparameterization
/// draw for `users[k]`, and its gradient with respect to `theta`.
pub fn vaecf_loss_and_grad(
    model: &VaecfModel,
    users: &[usize],
    noise: &[Vec<f64>],
    beta: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.theta.len()];
    let mut loss = 0.0;
    for (&u, eps) in users.iter().zip(noise) {
        loss += model.user_loss_grad(&model.inputs[u], eps, beta, &mut grad);
    }
    (loss, grad)
}

fn draw_noise(rng: &mut SeededRng, z: usize) -> Vec<f64> {
    (0..z).map(|_| StandardNormal.sample(rng)).collect()
}

/// Trains with Adam on mini-batches of users, one reparameterized sample
/// per user per step.
pub fn train_vaecf(data: &TrainData, hp: &HyperParams) -> Result<VaecfModel> {
    let mut model = VaecfModel::init(data, hp)?;
    let mut users: Vec<usize> = (0..data.n_users).filter(|&u| !data.user_items[u].is_empty()).collect();
    if users.is_empty() {
        return Err(ModelError::Precondition("no user has a training item".into()));
    }
    let mut rng = seeded(crate::rng::derive_seed(hp.seed, "vaecf-train"));
    let (b1, b2, adam_eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; model.theta.len()];
    let mut v = vec![0.0; model.theta.len()];
    let mut step = 0i32;
    for epoch in 1..=hp.epochs {
        users.shuffle(&mut rng);
        let mut neg_elbo = 0.0;
        for batch in users.chunks(hp.batch_size) {
            let noise: Vec<Vec<f64>> = batch.iter().map(|_| draw_noise(&mut rng, model.z_dim)).collect();
            let (loss, mut grad) = vaecf_loss_and_grad(&model, batch, &noise, hp.beta);
            neg_elbo += loss;
            let scale = 1.0 / batch.len() as f64;
            step += 1;
            let (c1, c2) = (1.0 - b1.powi(step), 1.0 - b2.powi(step));
            for (k, g) in grad.iter_mut().enumerate() {
                *g = *g * scale + 2.0 * hp.reg * model.theta[k];
                m[k] = b1 * m[k] + (1.0 - b1) * *g;
                v[k] = b2 * v[k] + (1.0 - b2) * *g * *g;
                model.theta[k] -= hp.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + adam_eps);
            }
        }
        if !neg_elbo.is_finite() || !model.finite() {
            return Err(ModelError::Divergence { epoch, learning_rate: hp.learning_rate });
        }
        log::debug!("vaecf epoch {epoch}: elbo {:.6}", -neg_elbo);
        model.elbo_trace.push(-neg_elbo);
    }
    Ok(model)
}

impl Recommender for VaecfModel {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_all(&self, user: usize) -> Result<Vec<f64>> {
        check_user(user, self.n_users)?;
        Ok(self.forward(&self.inputs[user], None).logits)
    }

    fn handles_cold_users(&self) -> bool {
        true
    }
}
