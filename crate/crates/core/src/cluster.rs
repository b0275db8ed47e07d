//! Subset generation: global K-Means over users' interaction histories, then
//! each group's members are split by cluster label.

use std::collections::BTreeMap;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{MgamError, Result};
use crate::rng::{self, Rng as StreamRng, Stream};

/// Dense `n_users × n_items` matrix of L2-normalised binary interaction rows.
pub fn build_user_features(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.user_items
        .iter()
        .map(|items| {
            let mut row = vec![0.0; ds.n_items];
            if !items.is_empty() {
                let v = 1.0 / (items.len() as f64).sqrt();
                for &i in items {
                    row[i] = v;
                }
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Objective after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // Every point coincides with a centroid; take any point.
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> KMeansResult {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; points.len()];
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut inertia = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            *l = c;
            inertia += d;
        }
        history.push(inertia);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        // Empty clusters take the point farthest from its current centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[labels[a]]);
                        let db = sq_dist(&points[b], &centroids[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty points");
                let old = labels[far];
                counts[old] -= 1;
                for (s, x) in sums[old].iter_mut().zip(&points[far]) {
                    *s -= x;
                }
                labels[far] = c;
                counts[c] = 1;
                sums[c] = points[far].clone();
            }
        }
        let new_centroids: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();
        let converged = new_centroids == centroids;
        centroids = new_centroids;
        if converged {
            break;
        }
    }
    let mut inertia = 0.0;
    for (l, p) in labels.iter_mut().zip(points) {
        let (c, d) = nearest(p, &centroids);
        *l = c;
        inertia += d;
    }
    if history.last() != Some(&inertia) {
        history.push(inertia);
    }
    KMeansResult {
        labels,
        centroids,
        inertia,
        history,
    }
}

/// Lloyd's algorithm with k-means++ seeding; keeps the lowest-inertia restart
/// (earliest restart on ties).
pub fn kmeans(
    points: &[Vec<f64>],
    m: usize,
    max_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<KMeansResult> {
    if points.is_empty() || m == 0 {
        return Err(MgamError::usage("kmeans needs at least one point and one cluster"));
    }
    if m > points.len() {
        return Err(MgamError::usage(format!(
            "kmeans with {m} clusters but only {} points",
            points.len()
        )));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = rng::keyed(seed, Stream::Clustering, r as u64);
        let init = kmeans_plus_plus(points, m, &mut rng);
        let run = lloyd(points, init, max_iters);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Members of one group split into subsets, largest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetAssignment {
    pub group: usize,
    pub subsets: Vec<Vec<usize>>,
}

impl SubsetAssignment {
    pub fn m_effective(&self) -> usize {
        self.subsets.len()
    }
}

/// Groups `members` by `labels[member]`. Subsets are ordered by size
/// (descending), then by smallest member index.
pub fn partition_group(group: usize, members: &[usize], labels: &[usize]) -> SubsetAssignment {
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &u in members {
        by_label.entry(labels[u]).or_default().push(u);
    }
    let mut subsets: Vec<Vec<usize>> = by_label
        .into_values()
        .map(|mut s| {
            s.sort_unstable();
            s
        })
        .collect();
    subsets.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    SubsetAssignment { group, subsets }
}

/// Global user labels for `m` subsets. Users without history take the label of
/// the centroid nearest the zero vector.
pub fn cluster_users(ds: &Dataset, m: usize, max_iters: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(MgamError::usage("number of subsets must be at least 1"));
    }
    let features = build_user_features(ds);
    let active: Vec<usize> = (0..ds.n_users).filter(|&u| !ds.user_items[u].is_empty()).collect();
    if active.is_empty() {
        return Ok(vec![0; ds.n_users]);
    }
    let points: Vec<Vec<f64>> = active.iter().map(|&u| features[u].clone()).collect();
    let k = m.min(points.len());
    let res = kmeans(&points, k, max_iters, restarts, seed)?;
    let zero = vec![0.0; ds.n_items];
    let cold = nearest(&zero, &res.centroids).0;
    let mut labels = vec![cold; ds.n_users];
    for (&u, &l) in active.iter().zip(&res.labels) {
        labels[u] = l;
    }
    Ok(labels)
}

pub fn assign_subsets(ds: &Dataset, labels: &[usize]) -> Vec<SubsetAssignment> {
    ds.groups
        .iter()
        .enumerate()
        .map(|(g, members)| partition_group(g, members, labels))
        .collect()
}

/// `group_id<TAB>subset_index<TAB>user_id` lines.
pub fn format_subsets(ds: &Dataset, subsets: &[SubsetAssignment]) -> String {
    let mut out = String::new();
    for a in subsets {
        for (i, s) in a.subsets.iter().enumerate() {
            for &u in s {
                out.push_str(&format!("{}\t{}\t{}\n", ds.group_ids.id(a.group), i, ds.users.id(u)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IdMap;
    use rand::SeedableRng;

    #[test]
    fn features_are_normalised_binary() {
        let ds = Dataset::from_indexed(
            vec![vec![0, 2], vec![], vec![0, 2]],
            vec![vec![0, 1, 2]],
            vec![vec![1]],
            IdMap::sequential(3),
            IdMap::sequential(4),
            IdMap::sequential(1),
        )
        .unwrap();
        let f = build_user_features(&ds);
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(f[0], vec![s, 0.0, s, 0.0]);
        assert_eq!(f[1], vec![0.0; 4]);
        assert_eq!(f[0], f[2]);
    }

    #[test]
    fn separated_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 10.0], vec![10.1, 10.0]];
        let r = kmeans(&pts, 2, 100, 3, 1).unwrap();
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[2], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[2]);
    }

    #[test]
    fn single_point() {
        let r = kmeans(&[vec![1.5, -2.0]], 1, 10, 1, 0).unwrap();
        assert_eq!(r.centroids[0], vec![1.5, -2.0]);
        assert_eq!(r.inertia, 0.0);
        assert!(kmeans(&[vec![1.0]], 2, 10, 1, 0).is_err());
    }

    // Oracle: best of 100 random labelings, each followed by centroid
    // recomputation and reassignment ("repair").
    #[test]
    fn beats_random_repaired_labelings() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let pts: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let r = kmeans(&pts, 3, 100, 3, 4).unwrap();
        let mut best = f64::INFINITY;
        for _ in 0..100 {
            let labels: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
            let mut cents = vec![vec![0.0; 4]; 3];
            let mut counts = [0usize; 3];
            for (p, &l) in pts.iter().zip(&labels) {
                counts[l] += 1;
                for d in 0..4 {
                    cents[l][d] += p[d];
                }
            }
            if counts.contains(&0) {
                continue;
            }
            for l in 0..3 {
                for d in 0..4 {
                    cents[l][d] /= counts[l] as f64;
                }
            }
            let inertia: f64 = pts
                .iter()
                .map(|p| cents.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
                .sum();
            best = best.min(inertia);
        }
        assert!(r.inertia <= best + 1e-12, "{} > {}", r.inertia, best);
    }

    #[test]
    fn inertia_history_is_non_increasing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        for seed in 0..5 {
            let r = kmeans(&pts, 4, 100, 1, seed).unwrap();
            assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", r.history);
        }
    }

    #[test]
    fn partition_examples() {
        let labels = [0, 0, 1];
        let a = partition_group(0, &[0, 1, 2], &labels);
        assert_eq!(a.subsets, vec![vec![0, 1], vec![2]]);
        let a = partition_group(0, &[0, 1, 2], &[4, 4, 4]);
        assert_eq!(a.m_effective(), 1);
        let a = partition_group(0, &[0, 1, 2], &[2, 0, 1]);
        assert_eq!(a.subsets, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn tie_break_by_smallest_member() {
        let labels = [1, 0, 1, 0];
        let a = partition_group(3, &[3, 2, 1, 0], &labels);
        assert_eq!(a.subsets, vec![vec![0, 2], vec![1, 3]]);
    }
}
