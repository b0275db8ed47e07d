use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use crate::error::{MgamError, Result};
use crate::rng::{self, Stream};

use super::{Dataset, Instance};

/// Held-out positive for one group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestCase {
    pub group: usize,
    pub item: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Remaining positives, all label 1.
    pub train: Vec<Instance>,
    pub test: Vec<TestCase>,
}

impl Split {
    /// Train positives bucketed by group, each list sorted.
    pub fn train_positives(&self, n_groups: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_groups];
        for inst in &self.train {
            out[inst.group].push(inst.item);
        }
        for l in &mut out {
            l.sort_unstable();
        }
        out
    }
}

const SPLIT_KEY: u64 = 0x5917;

/// Moves one uniformly chosen positive of every group with at least two
/// positives into the test set.
pub fn split_leave_one_out(ds: &Dataset, seed: u64) -> Split {
    let mut rng = rng::keyed(seed, Stream::Data, SPLIT_KEY);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (g, pos) in ds.group_pos.iter().enumerate() {
        let held = if pos.len() >= 2 {
            Some(rng.random_range(0..pos.len()))
        } else {
            None
        };
        for (k, &item) in pos.iter().enumerate() {
            if Some(k) == held {
                test.push(TestCase { group: g, item });
            } else {
                train.push(Instance::positive(g, item));
            }
        }
    }
    Split { train, test }
}

/// Draws `n` distinct items uniformly from those that are neither positives of
/// `group` nor listed in `exclude`.
pub fn sample_negatives<R: Rng + ?Sized>(
    ds: &Dataset,
    group: usize,
    n: usize,
    exclude: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    sample_complement(ds.n_items, &ds.group_pos[group], n, exclude, rng)
        .map_err(|eligible| {
            MgamError::Sampling(format!(
                "group {group}: need {n} negatives but only {eligible} items are eligible"
            ))
        })
}

/// `n` distinct draws from `0..n_items` minus the sorted `positives` and
/// `exclude`. On failure returns the number of eligible items.
pub(crate) fn sample_complement<R: Rng + ?Sized>(
    n_items: usize,
    positives: &[usize],
    n: usize,
    exclude: &[usize],
    rng: &mut R,
) -> std::result::Result<Vec<usize>, usize> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let blocked = |i: usize| positives.binary_search(&i).is_ok() || exclude.contains(&i);
    let extra: HashSet<usize> = exclude
        .iter()
        .copied()
        .filter(|&i| i < n_items && positives.binary_search(&i).is_err())
        .collect();
    let eligible = n_items - positives.len() - extra.len();
    if eligible < n {
        return Err(eligible);
    }
    if 2 * n <= eligible {
        let mut seen = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let i = rng.random_range(0..n_items);
            if !blocked(i) && seen.insert(i) {
                out.push(i);
            }
        }
        Ok(out)
    } else {
        let pool: Vec<usize> = (0..n_items).filter(|&i| !blocked(i)).collect();
        Ok(index::sample(rng, pool.len(), n)
            .into_iter()
            .map(|k| pool[k])
            .collect())
    }
}
