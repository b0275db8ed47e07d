//! Optimisation of the model: losses, Adam, epochs and checkpoints.

mod adam;
mod checkpoint;
mod loss;

use rand::seq::{IndexedRandom, SliceRandom};

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Manifest, TensorEntry, FORMAT_VERSION};
pub use loss::{point_loss, point_loss_logit, total_loss, triplet_loss, LossTerms, Triplet};

use crate::autodiff::{Gradients, Graph};
use crate::data::{sample_negatives, Instance, Split};
use crate::error::{MgamError, Result};
use crate::model::{forward_batch, Ablation, BatchGraphMode, Context, Model};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub margin: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_negatives: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 0.5,
            margin: 1.0,
            lr: 0.001,
            batch_size: 256,
            epochs: 100,
            train_negatives: 1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1.is_nan() || self.lambda1 < 0.0 {
            return Err(MgamError::usage("lambda1 must be non-negative"));
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(MgamError::usage("margin must be non-negative"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(MgamError::usage("learning rate must be a finite non-negative number"));
        }
        if self.batch_size == 0 {
            return Err(MgamError::usage("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub triplet_mean: f64,
    pub point_mean: f64,
    pub batches: usize,
}

/// Pairs each instance with a random same-label and different-label partner
/// from the same group in the batch; instances lacking either are skipped.
pub fn build_triplets(batch: &[Instance], rng: &mut Rng) -> Vec<Triplet> {
    let mut out = Vec::new();
    for (a, inst) in batch.iter().enumerate() {
        let same: Vec<usize> = (0..batch.len())
            .filter(|&k| k != a && batch[k].group == inst.group && batch[k].label == inst.label)
            .collect();
        let diff: Vec<usize> = (0..batch.len())
            .filter(|&k| batch[k].group == inst.group && batch[k].label != inst.label)
            .collect();
        if let (Some(&s), Some(&d)) = (same.choose(rng), diff.choose(rng)) {
            out.push(Triplet {
                anchor: a,
                same: s,
                diff: d,
            });
        }
    }
    out
}

/// Loss and gradients of one labelled batch.
pub fn batch_loss(
    model: &Model,
    ctx: &Context,
    batch: &[Instance],
    triplets: &[Triplet],
    cfg: &TrainConfig,
    ablation: Ablation,
) -> Result<(f64, f64, f64, Gradients)> {
    let pairs: Vec<(usize, usize)> = batch.iter().map(|i| (i.group, i.item)).collect();
    let labels: Vec<u8> = batch.iter().map(|i| i.label).collect();
    let mut g = Graph::new(&model.params);
    let out = forward_batch(&mut g, model, ctx, &pairs, ablation, BatchGraphMode::Induced, false)?;
    let loss = total_loss(&mut g, &out.logits, &labels, triplets, cfg.lambda1, cfg.margin)?;
    let grads = g.backward(loss.total)?;
    Ok((g.value(loss.total).item(), loss.triplet_mean, loss.point_mean, grads))
}

/// Labelled batches for one epoch: shuffled train positives, each followed by
/// `train_negatives` freshly sampled negatives of its group.
pub fn epoch_batches(
    ctx: &Context,
    split: &Split,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<Vec<Instance>>> {
    if split.train.is_empty() {
        return Err(MgamError::usage("no training instances"));
    }
    let mut positives = split.train.clone();
    positives.shuffle(rng);
    let per_batch = (cfg.batch_size / (1 + cfg.train_negatives)).max(1);
    let mut batches = Vec::with_capacity(positives.len().div_ceil(per_batch));
    for chunk in positives.chunks(per_batch) {
        let mut batch = Vec::with_capacity(chunk.len() * (1 + cfg.train_negatives));
        for pos in chunk {
            batch.push(*pos);
            for item in sample_negatives(ctx.dataset, pos.group, cfg.train_negatives, &[], rng)? {
                batch.push(Instance::negative(pos.group, item));
            }
        }
        batches.push(batch);
    }
    Ok(batches)
}

pub fn train_epoch(
    model: &mut Model,
    adam: &mut AdamState,
    ctx: &Context,
    split: &Split,
    cfg: &TrainConfig,
    ablation: Ablation,
    rng: &mut Rng,
) -> Result<EpochStats> {
    cfg.validate()?;
    let batches = epoch_batches(ctx, split, cfg, rng)?;
    let (mut loss_sum, mut trip_sum, mut point_sum) = (0.0, 0.0, 0.0);
    for batch in &batches {
        let triplets = build_triplets(batch, rng);
        let (loss, trip, point, grads) = batch_loss(model, ctx, batch, &triplets, cfg, ablation)?;
        adam.step(&mut model.params, &grads, cfg.lr)?;
        loss_sum += loss;
        trip_sum += trip;
        point_sum += point;
    }
    let n = batches.len() as f64;
    Ok(EpochStats {
        mean_loss: loss_sum / n,
        triplet_mean: trip_sum / n,
        point_mean: point_sum / n,
        batches: batches.len(),
    })
}
