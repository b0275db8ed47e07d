//! Group co-membership graph: one node per group, an edge wherever two groups
//! share a member, plus a unit self-loop on every node.

use std::collections::BTreeMap;

use crate::error::{MgamError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupGraph {
    /// Global group index of each local node.
    pub nodes: Vec<usize>,
    /// Sorted `(neighbour, weight)` lists, self-loop included.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    pub degree: Vec<f64>,
    /// Rows of `D^{-1/2} A D^{-1/2}`, same sparsity as `adjacency`.
    pub normalized: Vec<Vec<(usize, f64)>>,
}

impl GroupGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    fn from_adjacency(nodes: Vec<usize>, adjacency: Vec<Vec<(usize, f64)>>) -> Self {
        let degree: Vec<f64> = adjacency.iter().map(|row| row.iter().map(|e| e.1).sum()).collect();
        let normalized = normalize_rows(&adjacency, &degree);
        GroupGraph {
            nodes,
            adjacency,
            degree,
            normalized,
        }
    }

    /// Builds the graph over `groups` (member lists). With `weighted`, an
    /// edge carries the number of shared members instead of 1.
    pub fn build_co_membership(groups: &[Vec<usize>], weighted: bool) -> Self {
        let mut by_user: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (g, members) in groups.iter().enumerate() {
            for &u in members {
                by_user.entry(u).or_default().push(g);
            }
        }
        let mut rows: Vec<BTreeMap<usize, f64>> = (0..groups.len())
            .map(|g| BTreeMap::from([(g, 1.0)]))
            .collect();
        for gs in by_user.values() {
            for (a, &g) in gs.iter().enumerate() {
                for &h in &gs[a + 1..] {
                    for (x, y) in [(g, h), (h, g)] {
                        let w = rows[x].entry(y).or_insert(0.0);
                        *w = if weighted { *w + 1.0 } else { 1.0 };
                    }
                }
            }
        }
        let adjacency = rows.into_iter().map(|r| r.into_iter().collect()).collect();
        Self::from_adjacency((0..groups.len()).collect(), adjacency)
    }

    /// Restricts the graph to `batch` (local node ids of `self`), keeping
    /// only edges with both endpoints in the batch and recomputing degrees.
    /// Node order follows `batch`.
    pub fn induce_batch_subgraph(&self, batch: &[usize]) -> Result<Self> {
        let mut local = vec![usize::MAX; self.n()];
        for (k, &g) in batch.iter().enumerate() {
            if g >= self.n() {
                return Err(MgamError::usage(format!("unknown group index {g} in batch")));
            }
            if local[g] != usize::MAX {
                return Err(MgamError::usage(format!("group index {g} repeated in batch")));
            }
            local[g] = k;
        }
        let adjacency = batch
            .iter()
            .map(|&g| {
                let mut row: Vec<(usize, f64)> = self.adjacency[g]
                    .iter()
                    .filter(|(h, _)| local[*h] != usize::MAX)
                    .map(|&(h, w)| (local[h], w))
                    .collect();
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        let nodes = batch.iter().map(|&g| self.nodes[g]).collect();
        Ok(Self::from_adjacency(nodes, adjacency))
    }

    pub fn dense_adjacency(&self) -> Tensor {
        dense(&self.adjacency, self.n())
    }

    pub fn dense_normalized(&self) -> Tensor {
        dense(&self.normalized, self.n())
    }

    /// Local nodes within `hops` steps of `start`, sorted.
    pub fn neighbourhood(&self, start: usize, hops: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n()];
        seen[start] = true;
        let mut frontier = vec![start];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &v in &frontier {
                for &(h, _) in &self.adjacency[v] {
                    if !seen[h] {
                        seen[h] = true;
                        next.push(h);
                    }
                }
            }
            frontier = next;
        }
        (0..self.n()).filter(|&v| seen[v]).collect()
    }

    /// Undirected edges between distinct nodes, as global group indices.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, _) in row {
                if i < j {
                    out.push((self.nodes[i], self.nodes[j]));
                }
            }
        }
        out
    }
}

/// `A(i,j) / sqrt(d_i d_j)` over the sparsity pattern of `adjacency`.
pub fn normalize_rows(adjacency: &[Vec<(usize, f64)>], degree: &[f64]) -> Vec<Vec<(usize, f64)>> {
    adjacency
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|&(j, w)| (j, w / (degree[i] * degree[j]).sqrt()))
                .collect()
        })
        .collect()
}

fn dense(rows: &[Vec<(usize, f64)>], n: usize) -> Tensor {
    let mut t = Tensor::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, w) in row {
            t.set(i, j, w);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn co_membership_examples() {
        let g = GroupGraph::build_co_membership(&[vec![0, 1], vec![1, 2], vec![3]], false);
        assert_eq!(g.edges(), vec![(0, 1)]);
        let a = g.dense_adjacency();
        assert!((0..3).all(|i| a.get(i, i) == 1.0));

        let g = GroupGraph::build_co_membership(&[vec![0], vec![1], vec![2]], false);
        assert_eq!(g.dense_adjacency(), Tensor::identity(3));

        let g = GroupGraph::build_co_membership(&[vec![0, 1], vec![0], vec![0, 5]], false);
        assert_eq!(g.dense_adjacency(), Tensor::filled(3, 3, 1.0));
    }

    #[test]
    fn single_node_normalizes_to_one() {
        let g = GroupGraph::build_co_membership(&[vec![4]], false);
        assert_eq!(g.dense_normalized().data(), &[1.0]);
    }

    #[test]
    fn weighted_counts_shared_members() {
        let g = GroupGraph::build_co_membership(&[vec![0, 1, 2], vec![1, 2]], true);
        assert_eq!(g.adjacency[0], vec![(0, 1.0), (1, 2.0)]);
        let u = GroupGraph::build_co_membership(&[vec![0, 1, 2], vec![1, 2]], false);
        assert_eq!(u.adjacency[0], vec![(0, 1.0), (1, 1.0)]);
    }

    #[test]
    fn batch_validation() {
        let g = GroupGraph::build_co_membership(&[vec![0], vec![0]], false);
        assert!(g.induce_batch_subgraph(&[2]).is_err());
        assert!(g.induce_batch_subgraph(&[1, 1]).is_err());
    }

    #[test]
    fn neighbourhood_hops() {
        // path 0-1-2-3
        let g = GroupGraph::build_co_membership(&[vec![0], vec![0, 1], vec![1, 2], vec![2]], false);
        assert_eq!(g.neighbourhood(0, 0), vec![0]);
        assert_eq!(g.neighbourhood(0, 2), vec![0, 1, 2]);
        assert_eq!(g.neighbourhood(1, 2), vec![0, 1, 2, 3]);
    }
}
