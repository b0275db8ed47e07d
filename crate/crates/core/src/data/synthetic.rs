//! Planted-taste generator for group recommendation data.
//!
//! Users belong to latent cohorts: a user's taste vector is its cohort centre
//! plus `noise`-scaled Gaussian jitter. Utility of an item is the scaled dot
//! product of taste and item vectors. Users interact with their top items
//! (utility plus noise); groups are drawn mostly from one cohort, with a
//! `cross_cohort_fraction` chance per member of coming from another cohort;
//! group positives are the items with the highest mean member utility plus
//! noise. Every item is given to at least one user (the one valuing it most) so
//! that writing the dataset to TSV and reading it back keeps the item count.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MgamError, Result};
use crate::rng::{self, Stream};
use crate::tensor::dot;

use super::{Dataset, IdMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_users: usize,
    pub n_items: usize,
    pub n_groups: usize,
    pub group_size_min: usize,
    pub group_size_max: usize,
    pub n_cohorts: usize,
    pub latent_dim: usize,
    pub noise: f64,
    pub positives_per_group: usize,
    pub items_per_user: usize,
    pub cross_cohort_fraction: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            n_users: 200,
            n_items: 500,
            n_groups: 60,
            group_size_min: 3,
            group_size_max: 6,
            n_cohorts: 3,
            latent_dim: 8,
            noise: 0.1,
            positives_per_group: 10,
            items_per_user: 20,
            cross_cohort_fraction: 0.25,
        }
    }
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(MgamError::usage(format!("synthetic params: {m}")));
        if self.n_users == 0 || self.n_items == 0 || self.n_groups == 0 {
            return fail("entity counts must be positive");
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be positive");
        }
        if self.n_cohorts == 0 || self.n_cohorts > self.n_users {
            return fail("n_cohorts must be in 1..=n_users");
        }
        if self.group_size_min == 0 || self.group_size_min > self.group_size_max {
            return fail("group size range must satisfy 1 <= min <= max");
        }
        if self.group_size_max > self.n_users / self.n_cohorts {
            return fail("group_size_max exceeds the number of users per cohort");
        }
        if self.positives_per_group == 0 || self.positives_per_group > self.n_items {
            return fail("positives_per_group must be in 1..=n_items");
        }
        if self.items_per_user == 0 || self.items_per_user > self.n_items {
            return fail("items_per_user must be in 1..=n_items");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail("noise must be a non-negative number");
        }
        if !(0.0..=1.0).contains(&self.cross_cohort_fraction) {
            return fail("cross_cohort_fraction must be within [0, 1]");
        }
        Ok(())
    }
}

/// Latent structure behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    pub user_taste: Vec<Vec<f64>>,
    pub item_vec: Vec<Vec<f64>>,
    pub user_cohort: Vec<usize>,
    pub group_cohort: Vec<usize>,
}

impl PlantedTruth {
    pub fn utility(&self, user: usize, item: usize) -> f64 {
        dot(&self.user_taste[user], &self.item_vec[item]) / (self.item_vec[item].len() as f64).sqrt()
    }

    /// Noise-free mean member utility; the reference scorer for planted data.
    pub fn group_utility(&self, members: &[usize], item: usize) -> f64 {
        members.iter().map(|&u| self.utility(u, item)).sum::<f64>() / members.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: PlantedTruth,
    pub params: SyntheticParams,
    pub seed: u64,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Indices of the `k` largest scores; ties go to the smaller index.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn generate_synthetic(params: &SyntheticParams, seed: u64) -> Result<SyntheticData> {
    params.validate()?;
    let p = params;
    let mut rng = rng::stream(seed, Stream::Data);

    let centres: Vec<Vec<f64>> = (0..p.n_cohorts).map(|_| gaussian(&mut rng, p.latent_dim)).collect();
    let user_cohort: Vec<usize> = (0..p.n_users).map(|u| u % p.n_cohorts).collect();
    let user_taste: Vec<Vec<f64>> = user_cohort
        .iter()
        .map(|&c| {
            let jitter = gaussian(&mut rng, p.latent_dim);
            centres[c].iter().zip(jitter).map(|(m, j)| m + p.noise * j).collect()
        })
        .collect();
    let item_vec: Vec<Vec<f64>> = (0..p.n_items).map(|_| gaussian(&mut rng, p.latent_dim)).collect();
    let mut truth = PlantedTruth {
        user_taste,
        item_vec,
        user_cohort,
        group_cohort: Vec::with_capacity(p.n_groups),
    };

    let mut user_items: Vec<Vec<usize>> = Vec::with_capacity(p.n_users);
    for u in 0..p.n_users {
        let noisy: Vec<f64> = (0..p.n_items)
            .map(|i| truth.utility(u, i) + p.noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        user_items.push(top_k(&noisy, p.items_per_user));
    }
    let mut covered = vec![false; p.n_items];
    user_items.iter().flatten().for_each(|&i| covered[i] = true);
    for (i, _) in covered.iter().enumerate().filter(|(_, c)| !**c) {
        let best = (0..p.n_users)
            .max_by(|&a, &b| truth.utility(a, i).total_cmp(&truth.utility(b, i)).then(b.cmp(&a)))
            .expect("at least one user");
        user_items[best].push(i);
    }

    let by_cohort: Vec<Vec<usize>> = (0..p.n_cohorts)
        .map(|c| (0..p.n_users).filter(|&u| truth.user_cohort[u] == c).collect())
        .collect();
    let mut groups = Vec::with_capacity(p.n_groups);
    let mut group_pos = Vec::with_capacity(p.n_groups);
    for g in 0..p.n_groups {
        let cohort = g % p.n_cohorts;
        let size = rng.random_range(p.group_size_min..=p.group_size_max);
        let mut members: Vec<usize> = Vec::with_capacity(size);
        while members.len() < size {
            let from = if p.n_cohorts > 1 && rng.random_bool(p.cross_cohort_fraction) {
                let other = rng.random_range(0..p.n_cohorts - 1);
                if other >= cohort {
                    other + 1
                } else {
                    other
                }
            } else {
                cohort
            };
            let u = *by_cohort[from].choose(&mut rng).expect("non-empty cohort");
            if !members.contains(&u) {
                members.push(u);
            }
        }
        let noisy: Vec<f64> = (0..p.n_items)
            .map(|i| truth.group_utility(&members, i) + p.noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        group_pos.push(top_k(&noisy, p.positives_per_group));
        groups.push(members);
        truth.group_cohort.push(cohort);
    }

    let dataset = Dataset::from_indexed(
        user_items,
        groups,
        group_pos,
        IdMap::sequential(p.n_users),
        IdMap::sequential(p.n_items),
        IdMap::sequential(p.n_groups),
    )?;
    Ok(SyntheticData {
        dataset,
        truth,
        params: p.clone(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_are_exact() {
        let d = generate_synthetic(&SyntheticParams::default(), 1).unwrap();
        let ds = &d.dataset;
        assert_eq!((ds.n_users, ds.n_items, ds.n_groups), (200, 500, 60));
        assert!(ds.group_pos.iter().all(|p| p.len() == 10));
        assert!(ds.groups.iter().all(|g| (3..=6).contains(&g.len())));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SyntheticParams::default();
        let a = generate_synthetic(&p, 3).unwrap();
        let b = generate_synthetic(&p, 3).unwrap();
        let c = generate_synthetic(&p, 4).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn single_cohort_without_noise_shares_top_item() {
        let p = SyntheticParams {
            n_cohorts: 1,
            noise: 0.0,
            ..SyntheticParams::default()
        };
        let d = generate_synthetic(&p, 2).unwrap();
        let best: Vec<usize> = (0..d.dataset.n_groups)
            .map(|g| {
                let members = &d.dataset.groups[g];
                *d.dataset.group_pos[g]
                    .iter()
                    .max_by(|&&a, &&b| {
                        d.truth
                            .group_utility(members, a)
                            .total_cmp(&d.truth.group_utility(members, b))
                    })
                    .unwrap()
            })
            .collect();
        assert!(best.windows(2).all(|w| w[0] == w[1]));
    }

    fn jaccard(a: &[usize], b: &[usize]) -> f64 {
        let inter = a.iter().filter(|x| b.binary_search(x).is_ok()).count();
        inter as f64 / (a.len() + b.len() - inter) as f64
    }

    #[test]
    fn within_cohort_overlap_exceeds_cross_cohort() {
        let p = SyntheticParams {
            noise: 0.1,
            latent_dim: 8,
            ..SyntheticParams::default()
        };
        let d = generate_synthetic(&p, 5).unwrap();
        let (mut within, mut nw, mut cross, mut nc) = (0.0, 0, 0.0, 0);
        for a in 0..d.dataset.n_users {
            for b in a + 1..d.dataset.n_users {
                let o = jaccard(&d.dataset.user_items[a], &d.dataset.user_items[b]);
                if d.truth.user_cohort[a] == d.truth.user_cohort[b] {
                    within += o;
                    nw += 1;
                } else {
                    cross += o;
                    nc += 1;
                }
            }
        }
        assert!(within / nw as f64 > cross / nc as f64);
    }

    #[test]
    fn infeasible_params_rejected() {
        let p = SyntheticParams {
            positives_per_group: 501,
            ..SyntheticParams::default()
        };
        assert!(matches!(generate_synthetic(&p, 0), Err(MgamError::Usage(_))));
    }
}
