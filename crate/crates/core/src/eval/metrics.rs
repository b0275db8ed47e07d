use crate::error::{MgamError, Result};

/// 1 when the held-out item is within the top `k`.
pub fn hr_at_k(position: usize, k: usize) -> f64 {
    if position >= 1 && position <= k {
        1.0
    } else {
        0.0
    }
}

/// Single-relevant-item NDCG: `1 / log2(position + 1)` within the top `k`.
pub fn ndcg_at_k(position: usize, k: usize) -> f64 {
    if position >= 1 && position <= k {
        1.0 / ((position + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Candidates ordered by descending score, ties broken by ascending item index.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn new(candidates: &[usize], scores: &[f64]) -> Result<Self> {
        if candidates.is_empty() {
            return Err(MgamError::usage("cannot rank an empty candidate list"));
        }
        if candidates.len() != scores.len() {
            return Err(MgamError::usage("one score per candidate is required"));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(MgamError::usage("NaN score"));
        }
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(candidates[a].cmp(&candidates[b]))
        });
        Ok(RankedList {
            items: order.iter().map(|&k| candidates[k]).collect(),
            scores: order.iter().map(|&k| scores[k]).collect(),
        })
    }

    /// 1-indexed rank of `item`.
    pub fn position(&self, item: usize) -> Option<usize> {
        self.items.iter().position(|&i| i == item).map(|p| p + 1)
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.items[..k.min(self.items.len())]
    }
}
