//! Per-user dot-product scorer with member-score aggregation at inference.

use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::autodiff::{Graph, ParamStore};
use crate::data::{sample_complement, Dataset};
use crate::error::{MgamError, Result};
use crate::rng::{self, Stream};
use crate::tensor::{dot, sigmoid, Tensor};
use crate::train::AdamState;

use super::GroupScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Avg,
    LeastMisery,
    MaxSatisfaction,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [Aggregation::Avg, Aggregation::LeastMisery, Aggregation::MaxSatisfaction];

    pub fn label(self) -> &'static str {
        match self {
            Aggregation::Avg => "MF-AVG",
            Aggregation::LeastMisery => "MF-LM",
            Aggregation::MaxSatisfaction => "MF-MS",
        }
    }
}

impl FromStr for Aggregation {
    type Err = MgamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Aggregation::Avg),
            "lm" => Ok(Aggregation::LeastMisery),
            "ms" => Ok(Aggregation::MaxSatisfaction),
            other => Err(MgamError::usage(format!("unknown aggregation `{other}` (avg, lm, ms)"))),
        }
    }
}

/// Mean, minimum or maximum of the member scores.
pub fn baseline_aggregate(scores: &[f64], strategy: Aggregation) -> Result<f64> {
    if scores.is_empty() {
        return Err(MgamError::usage("aggregation over no member scores"));
    }
    Ok(match strategy {
        Aggregation::Avg => scores.iter().sum::<f64>() / scores.len() as f64,
        Aggregation::LeastMisery => scores.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::MaxSatisfaction => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub user_emb: Tensor,
    pub item_emb: Tensor,
}

impl MfModel {
    pub fn score(&self, user: usize, item: usize) -> f64 {
        sigmoid(dot(self.user_emb.row_slice(user), self.item_emb.row_slice(item)))
    }
}

/// Fits `σ(e(u)ᵀ e(v))` to user-item interactions with pointwise cross-entropy
/// and uniformly sampled negatives.
pub fn train_mf(ds: &Dataset, cfg: &MfConfig) -> Result<MfModel> {
    if cfg.dim == 0 || cfg.batch_size == 0 {
        return Err(MgamError::usage("MF dimension and batch size must be positive"));
    }
    let mut init = rng::stream(cfg.seed, Stream::Init);
    let scale = 1.0 / (cfg.dim as f64).sqrt();
    let mut store = ParamStore::new();
    let users = store.push("mf.user_emb", Tensor::uniform(ds.n_users, cfg.dim, scale, &mut init));
    let items = store.push("mf.item_emb", Tensor::uniform(ds.n_items, cfg.dim, scale, &mut init));
    let mut adam = AdamState::new(&store);
    let mut rng = rng::stream(cfg.seed, Stream::Training);
    let mut pairs: Vec<(usize, usize)> = ds
        .user_items
        .iter()
        .enumerate()
        .flat_map(|(u, its)| its.iter().map(move |&i| (u, i)))
        .collect();
    if pairs.is_empty() {
        return Err(MgamError::usage("no user-item interactions to train on"));
    }
    let ones = Tensor::filled(cfg.dim, 1, 1.0);
    let per_batch = (cfg.batch_size / (1 + cfg.negatives)).max(1);
    for _ in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        for chunk in pairs.chunks(per_batch) {
            let mut us = Vec::new();
            let mut is = Vec::new();
            let mut signs = Vec::new();
            for &(u, i) in chunk {
                us.push(u);
                is.push(i);
                signs.push(-1.0);
                let negs = sample_complement(ds.n_items, &ds.user_items[u], cfg.negatives, &[], &mut rng)
                    .map_err(|n| MgamError::Sampling(format!("user {u}: only {n} items left for negatives")))?;
                for v in negs {
                    us.push(u);
                    is.push(v);
                    signs.push(1.0);
                }
            }
            let mut g = Graph::new(&store);
            let ut = g.param(users);
            let it = g.param(items);
            let eu = g.rows(ut, &us)?;
            let ev = g.rows(it, &is)?;
            let prod = g.mul(eu, ev)?;
            let ones = g.constant(ones.clone());
            let z = g.matmul(prod, ones)?;
            let signs = g.constant(Tensor::from_vec(signs.len(), 1, signs)?);
            let signed = g.mul(z, signs)?;
            let sp = g.softplus(signed);
            let loss = g.mean(sp);
            let grads = g.backward(loss)?;
            adam.step(&mut store, &grads, cfg.lr)?;
        }
    }
    Ok(MfModel {
        user_emb: store.get(users).clone(),
        item_emb: store.get(items).clone(),
    })
}

pub struct MfScorer<'a> {
    pub mf: &'a MfModel,
    pub dataset: &'a Dataset,
    pub strategy: Aggregation,
}

impl GroupScorer for MfScorer<'_> {
    fn score(&self, group: usize, items: &[usize]) -> Result<Vec<f64>> {
        let members = &self.dataset.groups[group];
        items
            .iter()
            .map(|&v| {
                let s: Vec<f64> = members.iter().map(|&u| self.mf.score(u, v)).collect();
                baseline_aggregate(&s, self.strategy)
            })
            .collect()
    }
}
