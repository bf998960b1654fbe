use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_item, check_user, dot, gaussian_vec, neg_log_sigmoid, sigmoid, HyperParams, ModelError,
    Recommender, Result, TrainData,
};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::textprep::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentVariant {
    /// `p_u . q_i + w_u . e_i`
    Vbpr,
    /// `mu + b_u + b_i + p_u . (H e_i)`
    Vmf,
    /// `p_u . q_i + g(e_i)` with a softmax gate over modality blocks.
    Amr,
}

/// Dense item features in model item order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub modality: Option<Modality>,
    pub dim: usize,
    /// Row-major `n_items x dim`.
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFeatures {
    pub n_items: usize,
    pub blocks: Vec<FeatureMatrix>,
}

impl ItemFeatures {
    pub fn single(n_items: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_items * dim, "feature data length");
        Self {
            n_items,
            blocks: vec![FeatureMatrix { modality: None, dim, data }],
        }
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// All blocks side by side as one block.
    pub fn concatenated(&self) -> Self {
        if self.blocks.len() == 1 {
            return self.clone();
        }
        let d = self.total_dim();
        let mut data = Vec::with_capacity(self.n_items * d);
        for i in 0..self.n_items {
            for b in &self.blocks {
                data.extend_from_slice(b.row(i));
            }
        }
        Self::single(self.n_items, d, data)
    }
}

/// Gathers feature rows for `item_ids` from matrices whose rows follow
/// `source_ids`. Each block becomes one [`FeatureMatrix`].
pub fn item_features_for(
    item_ids: &[String],
    source_ids: &[String],
    blocks: &[(Option<Modality>, &DMatrix<f64>)],
) -> Result<ItemFeatures> {
    let index: HashMap<&str, usize> = source_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
    let rows: Vec<usize> = item_ids
        .iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| ModelError::MissingFeature(id.clone())))
        .collect::<Result<_>>()?;
    let blocks = blocks
        .iter()
        .map(|&(modality, m)| {
            if m.nrows() != source_ids.len() {
                return Err(ModelError::Argument(format!(
                    "feature matrix has {} rows for {} ids",
                    m.nrows(),
                    source_ids.len()
                )));
            }
            let dim = m.ncols();
            let mut data = Vec::with_capacity(rows.len() * dim);
            for &r in &rows {
                data.extend(m.row(r).iter());
            }
            Ok(FeatureMatrix { modality, dim, data })
        })
        .collect::<Result<_>>()?;
    Ok(ItemFeatures {
        n_items: item_ids.len(),
        blocks,
    })
}

/// Parameter blocks; blocks a variant does not use are empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContentParams {
    /// `n_users x d`
    pub p: Vec<f64>,
    /// `n_items x d` (vbpr, amr)
    pub q: Vec<f64>,
    /// `n_users x d_e` (vbpr)
    pub w: Vec<f64>,
    /// `d x d_e` (vmf)
    pub h: Vec<f64>,
    pub mu: f64,
    /// vmf only
    pub user_bias: Vec<f64>,
    /// vmf only
    pub item_bias: Vec<f64>,
    /// Concatenated per-block scoring vectors `a_m` (amr)
    pub gate: Vec<f64>,
}

impl ContentParams {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(&self.p);
        v.extend(&self.q);
        v.extend(&self.w);
        v.extend(&self.h);
        v.push(self.mu);
        v.extend(&self.user_bias);
        v.extend(&self.item_bias);
        v.extend(&self.gate);
        v
    }

    /// Overwrites all values from `flat`, keeping the block shapes.
    pub fn assign(&mut self, flat: &[f64]) {
        let mut off = 0;
        for block in [&mut self.p, &mut self.q, &mut self.w, &mut self.h] {
            let n = block.len();
            block.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        self.mu = flat[off];
        off += 1;
        for block in [&mut self.user_bias, &mut self.item_bias, &mut self.gate] {
            let n = block.len();
            block.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length");
    }

    fn zeros_like(&self) -> Self {
        Self {
            p: vec![0.0; self.p.len()],
            q: vec![0.0; self.q.len()],
            w: vec![0.0; self.w.len()],
            h: vec![0.0; self.h.len()],
            mu: 0.0,
            user_bias: vec![0.0; self.user_bias.len()],
            item_bias: vec![0.0; self.item_bias.len()],
            gate: vec![0.0; self.gate.len()],
        }
    }

    fn squared_norm(&self) -> f64 {
        [&self.p, &self.q, &self.w, &self.h, &self.item_bias, &self.gate]
            .iter()
            .map(|b| dot(b, b))
            .sum()
    }

    fn field_mut(&mut self, f: Field) -> &mut Vec<f64> {
        match f {
            Field::P => &mut self.p,
            Field::Q => &mut self.q,
            Field::W => &mut self.w,
            Field::H => &mut self.h,
            Field::ItemBias => &mut self.item_bias,
            Field::Gate => &mut self.gate,
        }
    }

    fn finite(&self) -> bool {
        self.mu.is_finite() && self.flatten().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    P,
    Q,
    W,
    H,
    ItemBias,
    Gate,
}

/// One pairwise training example: `user` prefers `pos` over `neg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Per-item cache of user-independent score terms, rebuilt lazily.
#[derive(Debug, Default)]
struct ItemCache(OnceLock<Vec<f64>>);

impl Clone for ItemCache {
    fn clone(&self) -> Self {
        Self::default()
    }
}

impl PartialEq for ItemCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentModel {
    pub variant: ContentVariant,
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    params: ContentParams,
    pub features: ItemFeatures,
    /// Mean pairwise loss over each epoch's sampled triples.
    pub loss_trace: Vec<f64>,
    #[serde(skip)]
    cache: ItemCache,
}

/// Gate outputs for one item.
struct Gate {
    scores: Vec<f64>,
    weights: Vec<f64>,
    value: f64,
}

impl ContentModel {
    /// Randomly initialized model. VBPR and VMF see the features as one
    /// concatenated block; AMR keeps one gate input per block.
    pub fn init(
        variant: ContentVariant,
        n_users: usize,
        features: &ItemFeatures,
        hp: &HyperParams,
    ) -> Result<Self> {
        hp.validate()?;
        let features = match variant {
            ContentVariant::Amr => features.clone(),
            _ => features.concatenated(),
        };
        let n_items = features.n_items;
        let de = features.total_dim();
        if de == 0 {
            return Err(ModelError::Argument("features have zero width".into()));
        }
        let d = hp.latent_dim;
        let mut rng = seeded(derive_seed(hp.seed, "content-init"));
        let mut params = ContentParams {
            p: gaussian_vec(&mut rng, n_users * d, hp.init_std),
            ..ContentParams::default()
        };
        match variant {
            ContentVariant::Vbpr => {
                params.q = gaussian_vec(&mut rng, n_items * d, hp.init_std);
                params.w = gaussian_vec(&mut rng, n_users * de, hp.init_std);
            }
            ContentVariant::Vmf => {
                params.h = gaussian_vec(&mut rng, d * de, hp.init_std);
                params.user_bias = vec![0.0; n_users];
                params.item_bias = vec![0.0; n_items];
            }
            ContentVariant::Amr => {
                params.q = gaussian_vec(&mut rng, n_items * d, hp.init_std);
                params.gate = gaussian_vec(&mut rng, de, hp.init_std);
            }
        }
        Ok(Self {
            variant,
            n_users,
            n_items,
            dim: d,
            params,
            features,
            loss_trace: Vec::new(),
            cache: ItemCache::default(),
        })
    }

    pub fn params(&self) -> &ContentParams {
        &self.params
    }

    pub fn set_params(&mut self, params: ContentParams) {
        let shape = |p: &ContentParams| {
            [&p.p, &p.q, &p.w, &p.h, &p.user_bias, &p.item_bias, &p.gate].map(|b| b.len())
        };
        assert_eq!(shape(&params), shape(&self.params), "parameter block shapes");
        self.params = params;
        self.cache = ItemCache::default();
    }

    pub fn feature_dim(&self) -> usize {
        self.features.total_dim()
    }

    fn e(&self, i: usize) -> &[f64] {
        self.features.blocks[0].row(i)
    }

    fn p_row(&self, u: usize) -> &[f64] {
        &self.params.p[u * self.dim..(u + 1) * self.dim]
    }

    fn q_row(&self, i: usize) -> &[f64] {
        &self.params.q[i * self.dim..(i + 1) * self.dim]
    }

    /// `H e_i` for VMF.
    fn projected(&self, i: usize) -> Vec<f64> {
        let e = self.e(i);
        let de = e.len();
        (0..self.dim)
            .map(|k| dot(&self.params.h[k * de..(k + 1) * de], e))
            .collect()
    }

    fn gate(&self, i: usize) -> Gate {
        let mut scores = Vec::with_capacity(self.features.blocks.len());
        let mut off = 0;
        for b in &self.features.blocks {
            scores.push(dot(&self.params.gate[off..off + b.dim], b.row(i)));
            off += b.dim;
        }
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let weights: Vec<f64> = exps.iter().map(|x| x / z).collect();
        let value = weights.iter().zip(&scores).map(|(a, s)| a * s).sum();
        Gate { scores, weights, value }
    }

    /// Modality attention weights of the gate for `item`.
    pub fn attention(&self, item: usize) -> Result<Vec<f64>> {
        check_item(item, self.n_items)?;
        if self.variant != ContentVariant::Amr {
            return Err(ModelError::Argument("attention is defined for amr only".into()));
        }
        Ok(self.gate(item).weights)
    }

    /// Score computed from parameters without any cache.
    fn raw_score(&self, u: usize, i: usize) -> f64 {
        let pu = self.p_row(u);
        match self.variant {
            ContentVariant::Vbpr => {
                let de = self.feature_dim();
                dot(pu, self.q_row(i)) + dot(&self.params.w[u * de..(u + 1) * de], self.e(i))
            }
            ContentVariant::Vmf => {
                self.params.mu
                    + self.params.user_bias[u]
                    + self.params.item_bias[i]
                    + dot(pu, &self.projected(i))
            }
            ContentVariant::Amr => dot(pu, self.q_row(i)) + self.gate(i).value,
        }
    }

    /// Emits `d x / d theta` for `x = score(u, pos) - score(u, neg)`, each
    /// parameter entry at most once.
    fn triple_partials(&self, t: BprTriple, out: &mut Vec<(Field, usize, f64)>) {
        let d = self.dim;
        let (u, i, j) = (t.user, t.pos, t.neg);
        let pu = self.p_row(u);
        match self.variant {
            ContentVariant::Vbpr | ContentVariant::Amr => {
                let (qi, qj) = (self.q_row(i), self.q_row(j));
                for k in 0..d {
                    out.push((Field::P, u * d + k, qi[k] - qj[k]));
                    out.push((Field::Q, i * d + k, pu[k]));
                    out.push((Field::Q, j * d + k, -pu[k]));
                }
            }
            ContentVariant::Vmf => {
                let (hi, hj) = (self.projected(i), self.projected(j));
                let (ei, ej) = (self.e(i), self.e(j));
                let de = ei.len();
                for k in 0..d {
                    out.push((Field::P, u * d + k, hi[k] - hj[k]));
                    for l in 0..de {
                        out.push((Field::H, k * de + l, pu[k] * (ei[l] - ej[l])));
                    }
                }
                out.push((Field::ItemBias, i, 1.0));
                out.push((Field::ItemBias, j, -1.0));
            }
        }
        match self.variant {
            ContentVariant::Vbpr => {
                let (ei, ej) = (self.e(i), self.e(j));
                let de = ei.len();
                for l in 0..de {
                    out.push((Field::W, u * de + l, ei[l] - ej[l]));
                }
            }
            ContentVariant::Amr => {
                let (gi, gj) = (self.gate(i), self.gate(j));
                let mut off = 0;
                for (m, b) in self.features.blocks.iter().enumerate() {
                    let ci = gi.weights[m] * (1.0 + gi.scores[m] - gi.value);
                    let cj = gj.weights[m] * (1.0 + gj.scores[m] - gj.value);
                    let (ei, ej) = (b.row(i), b.row(j));
                    for l in 0..b.dim {
                        out.push((Field::Gate, off + l, ci * ei[l] - cj * ej[l]));
                    }
                    off += b.dim;
                }
            }
            ContentVariant::Vmf => {}
        }
    }

    /// One SGD pass over `triples` in the given order; returns the mean
    /// pairwise loss observed before each step.
    pub fn sgd_epoch(&mut self, triples: &[BprTriple], hp: &HyperParams) -> f64 {
        self.cache = ItemCache::default();
        let lr = hp.learning_rate;
        let mut partials = Vec::new();
        let mut total = 0.0;
        for &t in triples {
            let x = self.raw_score(t.user, t.pos) - self.raw_score(t.user, t.neg);
            total += neg_log_sigmoid(x);
            let coef = -sigmoid(-x);
            partials.clear();
            self.triple_partials(t, &mut partials);
            for &(f, idx, g) in &partials {
                let v = &mut self.params.field_mut(f)[idx];
                *v -= lr * (coef * g + 2.0 * hp.reg * *v);
            }
        }
        total / triples.len().max(1) as f64
    }
}

/// `sum over triples of -ln sigmoid(x) + reg * ||theta||^2`, where the norm
/// covers every trainable block.
pub fn bpr_objective(model: &ContentModel, triples: &[BprTriple], reg: f64) -> f64 {
    let data: f64 = triples
        .iter()
        .map(|t| neg_log_sigmoid(model.raw_score(t.user, t.pos) - model.raw_score(t.user, t.neg)))
        .sum();
    data + reg * model.params.squared_norm()
}

/// Gradient of [`bpr_objective`] in [`ContentParams::flatten`] order.
pub fn bpr_gradient(model: &ContentModel, triples: &[BprTriple], reg: f64) -> Vec<f64> {
    let mut g = model.params.zeros_like();
    let mut partials = Vec::new();
    for &t in triples {
        let x = model.raw_score(t.user, t.pos) - model.raw_score(t.user, t.neg);
        let coef = -sigmoid(-x);
        partials.clear();
        model.triple_partials(t, &mut partials);
        for &(f, idx, d) in &partials {
            g.field_mut(f)[idx] += coef * d;
        }
    }
    let p = &model.params;
    for (dst, src) in [
        (&mut g.p, &p.p),
        (&mut g.q, &p.q),
        (&mut g.w, &p.w),
        (&mut g.h, &p.h),
        (&mut g.item_bias, &p.item_bias),
        (&mut g.gate, &p.gate),
    ] {
        for (a, b) in dst.iter_mut().zip(src) {
            *a += 2.0 * reg * b;
        }
    }
    g.flatten()
}

/// Draws `negatives` triples per observed interaction, visiting the
/// interactions in shuffled order. Negatives are uniform over the user's
/// unobserved items; users who have seen every item contribute nothing.
pub fn sample_triples(data: &TrainData, negatives: usize, rng: &mut SeededRng) -> Vec<BprTriple> {
    let mut order: Vec<usize> = (0..data.interactions.len()).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(order.len() * negatives);
    for t in order {
        let (u, i, _) = data.interactions[t];
        let seen = &data.user_items[u];
        if seen.len() >= data.n_items {
            continue;
        }
        for _ in 0..negatives {
            let neg = if seen.len() * 2 <= data.n_items {
                loop {
                    let j = rng.random_range(0..data.n_items);
                    if seen.binary_search(&j).is_err() {
                        break j;
                    }
                }
            } else {
                let unseen: Vec<usize> =
                    (0..data.n_items).filter(|j| seen.binary_search(j).is_err()).collect();
                unseen[rng.random_range(0..unseen.len())]
            };
            out.push(BprTriple { user: u, pos: i, neg });
        }
    }
    out
}

/// Trains a content-aware model with pairwise ranking loss.
pub fn train_content(
    data: &TrainData,
    features: &ItemFeatures,
    variant: ContentVariant,
    hp: &HyperParams,
) -> Result<ContentModel> {
    if data.is_empty() {
        return Err(ModelError::Precondition("training set is empty".into()));
    }
    if features.n_items != data.n_items {
        return Err(ModelError::Precondition(format!(
            "features cover {} items but the catalog has {}",
            features.n_items, data.n_items
        )));
    }
    let mut model = ContentModel::init(variant, data.n_users, features, hp)?;
    let mut rng = seeded(derive_seed(hp.seed, "content-sampling"));
    for epoch in 1..=hp.epochs {
        let triples = sample_triples(data, hp.negatives, &mut rng);
        let loss = model.sgd_epoch(&triples, hp);
        if !loss.is_finite() || !model.params.finite() {
            return Err(ModelError::Divergence { epoch, learning_rate: hp.learning_rate });
        }
        log::debug!("{variant:?} epoch {epoch}: loss {loss:.6}");
        model.loss_trace.push(loss);
    }
    Ok(model)
}

impl Recommender for ContentModel {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_all(&self, user: usize) -> Result<Vec<f64>> {
        check_user(user, self.n_users)?;
        let pu = self.p_row(user);
        let d = self.dim;
        Ok(match self.variant {
            ContentVariant::Vbpr => (0..self.n_items).map(|i| self.raw_score(user, i)).collect(),
            ContentVariant::Vmf => {
                let proj = self.cache.0.get_or_init(|| (0..self.n_items).flat_map(|i| self.projected(i)).collect());
                let base = self.params.mu + self.params.user_bias[user];
                (0..self.n_items)
                    .map(|i| base + self.params.item_bias[i] + dot(pu, &proj[i * d..(i + 1) * d]))
                    .collect()
            }
            ContentVariant::Amr => {
                let g = self.cache.0.get_or_init(|| (0..self.n_items).map(|i| self.gate(i).value).collect());
                (0..self.n_items).map(|i| dot(pu, self.q_row(i)) + g[i]).collect()
            }
        })
    }

    fn score(&self, user: usize, item: usize) -> Result<f64> {
        check_user(user, self.n_users)?;
        check_item(item, self.n_items)?;
        Ok(self.raw_score(user, item))
    }
}
