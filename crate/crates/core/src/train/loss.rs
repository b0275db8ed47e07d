//! Triplet hinge and pointwise cross-entropy losses.

use crate::autodiff::{Axis, Graph, Var};
use crate::error::{MgamError, Result};
use crate::tensor::{softplus, Tensor};

/// `max(0, (y - y_same)^2 - (y - y_diff)^2 + margin)`.
pub fn triplet_loss(anchor: f64, same: f64, diff: f64, margin: f64) -> f64 {
    ((anchor - same).powi(2) - (anchor - diff).powi(2) + margin).max(0.0)
}

/// Binary cross-entropy of probability `y_hat` against `label`.
pub fn point_loss(y_hat: f64, label: u8) -> f64 {
    let logit = (y_hat / (1.0 - y_hat)).ln();
    point_loss_logit(logit, label)
}

/// Binary cross-entropy from a pre-sigmoid score, `softplus(∓z)`.
pub fn point_loss_logit(logit: f64, label: u8) -> f64 {
    if label == 1 {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// Indices into a batch: anchor, a same-label partner and a different-label
/// partner from the same group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub same: usize,
    pub diff: usize,
}

pub struct LossTerms {
    pub total: Var,
    pub triplet_mean: f64,
    pub point_mean: f64,
}

/// Mean triplet term over `triplets` plus `lambda1` times the mean pointwise
/// term over all instances. No triplets means a zero triplet term.
pub fn total_loss(
    g: &mut Graph,
    logits: &[Var],
    labels: &[u8],
    triplets: &[Triplet],
    lambda1: f64,
    margin: f64,
) -> Result<LossTerms> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(MgamError::usage("loss needs one label per logit"));
    }
    let n = logits.len();
    let z = g.concat(logits, Axis::Cols)?;
    let signs = Tensor::row(labels.iter().map(|&y| if y == 1 { -1.0 } else { 1.0 }).collect());
    let signs = g.constant(signs);
    let signed = g.mul(z, signs)?;
    let bce = g.softplus(signed);
    let point = g.mean(bce);
    let point_mean = g.value(point).item();

    let weighted = g.scale(point, lambda1);
    if triplets.is_empty() {
        return Ok(LossTerms {
            total: weighted,
            triplet_mean: 0.0,
            point_mean,
        });
    }
    let t = triplets.len();
    let mut to_same = Tensor::zeros(n, t);
    let mut to_diff = Tensor::zeros(n, t);
    for (k, tr) in triplets.iter().enumerate() {
        if tr.anchor >= n || tr.same >= n || tr.diff >= n {
            return Err(MgamError::usage("triplet index outside the batch"));
        }
        to_same.set(tr.anchor, k, to_same.get(tr.anchor, k) + 1.0);
        to_same.set(tr.same, k, to_same.get(tr.same, k) - 1.0);
        to_diff.set(tr.anchor, k, to_diff.get(tr.anchor, k) + 1.0);
        to_diff.set(tr.diff, k, to_diff.get(tr.diff, k) - 1.0);
    }
    let y = g.sigmoid(z);
    let to_same = g.constant(to_same);
    let to_diff = g.constant(to_diff);
    let ds = g.matmul(y, to_same)?;
    let dd = g.matmul(y, to_diff)?;
    let ds2 = g.mul(ds, ds)?;
    let dd2 = g.mul(dd, dd)?;
    let neg_dd2 = g.scale(dd2, -1.0);
    let gap = g.add(ds2, neg_dd2)?;
    let margin = g.constant(Tensor::scalar(margin));
    let gap = g.add(gap, margin)?;
    let hinge = g.relu(gap);
    let trip = g.mean(hinge);
    let triplet_mean = g.value(trip).item();
    let total = g.add(trip, weighted)?;
    Ok(LossTerms {
        total,
        triplet_mean,
        point_mean,
    })
}
