//! Forward pass over a batch of (group, item) pairs.
//!
//! Per pair `(g, v)`:
//!
//! * SubPE: attention over members inside each subset of `g` (scored against
//!   `v`), then attention over the subset embeddings with per-slot weights.
//! * GPE: attention over all members of `g`.
//! * SupPE: a global stream propagates the group-id table over the global
//!   co-membership graph; a batch stream propagates SubPE embeddings of the
//!   batch's groups (all evaluated against the same item `v`) over the batch
//!   graph. Only the `layers`-hop neighbourhood of `g` is materialised.
//! * Fusion: scaled dot-product self-attention over the stacked active
//!   granularity rows, mean-pooled to one vector.
//! * Prediction: `W · [f, f ⊙ e(v), e(v)] + b`, returned as a logit.

use std::collections::HashMap;

use serde::Serialize;

use crate::autodiff::{Axis, Graph, Var};
use crate::cluster::SubsetAssignment;
use crate::data::Dataset;
use crate::error::{MgamError, Result};
use crate::graph::GroupGraph;
use crate::tensor::{sigmoid, Tensor};

use super::{Ablation, Model};

/// Read-only inputs shared by all forward passes over one dataset.
pub struct Context<'a> {
    pub dataset: &'a Dataset,
    pub subsets: &'a [SubsetAssignment],
    pub graph: &'a GroupGraph,
    global_dense: Tensor,
}

impl<'a> Context<'a> {
    pub fn new(dataset: &'a Dataset, subsets: &'a [SubsetAssignment], graph: &'a GroupGraph) -> Self {
        Context {
            dataset,
            subsets,
            graph,
            global_dense: graph.dense_normalized(),
        }
    }
}

/// Which graph the SupPE batch stream runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchGraphMode {
    /// Subgraph of the global graph induced by the batch's groups.
    Induced,
    /// The whole global graph; scores then do not depend on batch makeup.
    Global,
}

/// Attention weights and intermediate embeddings for one (group, item) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupForwardState {
    pub group: usize,
    pub item: usize,
    pub subsets: Vec<Vec<usize>>,
    /// Member weights within each subset, aligned with `subsets`.
    pub member_weights: Vec<Vec<f64>>,
    pub subset_weights: Vec<f64>,
    pub gpe_weights: Vec<f64>,
    /// Names of the fused rows, in stack order.
    pub fusion_rows: Vec<&'static str>,
    pub fusion_attention: Vec<Vec<f64>>,
    pub h_subpe: Option<Vec<f64>>,
    pub h_gpe: Option<Vec<f64>>,
    pub h_suppe: Option<Vec<f64>>,
    pub h_fusion: Vec<f64>,
    pub score: f64,
}

pub struct ForwardOutput {
    /// One `1 × 1` pre-sigmoid score per batch entry.
    pub logits: Vec<Var>,
    /// Filled only when recording was requested.
    pub states: Vec<GroupForwardState>,
}

struct Pooled {
    h: Var,
    weights: Option<Var>,
}

struct SubPe {
    h: Var,
    members: Vec<Option<Var>>,
    subset_weights: Option<Var>,
}

fn weights_of(g: &Graph, w: Option<Var>, n: usize) -> Vec<f64> {
    match w {
        Some(v) => g.value(v).data().to_vec(),
        None => vec![1.0; n],
    }
}

/// Softmax-weighted sum of the rows of `members` (m × d); each row is scored
/// by `relu(w · (row · item) + b)`.
pub fn attention_pool(g: &mut Graph, members: Var, item: Var, w: Var, b: Var) -> Result<(Var, Option<Var>)> {
    if g.value(members).rows() == 0 {
        return Err(MgamError::usage("attention over an empty member set"));
    }
    if g.value(members).rows() == 1 {
        return Ok((members, None));
    }
    let dots = g.matmul_nt(item, members)?;
    let s = g.matmul(w, dots)?;
    let s = g.add(s, b)?;
    let s = g.relu(s);
    let weights = g.softmax(s)?;
    let h = g.matmul(weights, members)?;
    Ok((h, Some(weights)))
}

/// Attention across subset embeddings (`slots`, in slot order, at most
/// `num_subsets` of them). Missing slots are zero vectors.
pub fn subset_attention(g: &mut Graph, model: &Model, slots: &[Var]) -> Result<(Var, Option<Var>)> {
    let m = model.config.num_subsets;
    let d = model.config.dim;
    match slots.len() {
        0 => return Err(MgamError::usage("subset attention needs at least one subset")),
        n if n > m => {
            return Err(MgamError::usage(format!(
                "{n} subsets exceed the configured maximum of {m}"
            )))
        }
        1 => return Ok((slots[0], None)),
        _ => {}
    }
    let ids = &model.ids;
    let zero = g.constant(Tensor::zeros(1, d));
    let ws = g.param(ids.subset_score_w);
    let bs = g.param(ids.subset_score_b);
    let mut scores = Vec::with_capacity(slots.len());
    for (i, &h) in slots.iter().enumerate() {
        let slot = &ids.slots[i];
        let others: Vec<Var> = (0..m)
            .filter(|&j| j != i)
            .map(|j| slots.get(j).copied().unwrap_or(zero))
            .collect();
        let h_bar = g.concat(&others, Axis::Cols)?;
        let wi = g.param(slot.w);
        let w_bar = g.param(slot.w_bar.expect("more than one slot"));
        let bi = g.param(slot.b);
        let own = g.matmul_nt(h, wi)?;
        let rest = g.matmul_nt(h_bar, w_bar)?;
        let pre = g.add(own, rest)?;
        let pre = g.add(pre, bi)?;
        let act = g.relu(pre);
        let a = g.matmul_nt(act, ws)?;
        scores.push(g.add(a, bs)?);
    }
    let a = g.concat(&scores, Axis::Cols)?;
    let weights = g.softmax(a)?;
    let stack = g.concat(slots, Axis::Rows)?;
    let h = g.matmul(weights, stack)?;
    Ok((h, Some(weights)))
}

/// `H ← relu(Â H W)` for each weight in turn.
pub fn propagate(g: &mut Graph, h0: Var, adjacency: &[Tensor], weights: &[Var]) -> Result<Var> {
    if adjacency.len() != weights.len() {
        return Err(MgamError::usage("one adjacency block per propagation layer is required"));
    }
    let mut h = h0;
    for (a, &w) in adjacency.iter().zip(weights) {
        let a = g.constant(a.clone());
        let ah = g.matmul(a, h)?;
        let ahw = g.matmul(ah, w)?;
        h = g.relu(ahw);
    }
    Ok(h)
}

/// Self-attention over the stacked rows, mean-pooled.
pub fn fuse(g: &mut Graph, rows: &[Var]) -> Result<(Var, Option<Var>)> {
    match rows.len() {
        0 => Err(MgamError::usage("fusion over zero granularities")),
        1 => Ok((rows[0], None)),
        k => {
            let d = g.value(rows[0]).cols();
            let stack = g.concat(rows, Axis::Rows)?;
            let sim = g.matmul_nt(stack, stack)?;
            let sim = g.scale(sim, 1.0 / (d as f64).sqrt());
            let att = g.softmax(sim)?;
            let fused = g.matmul(att, stack)?;
            let pool = g.constant(Tensor::filled(1, k, 1.0 / k as f64));
            Ok((g.matmul(pool, fused)?, Some(att)))
        }
    }
}

/// Pre-sigmoid prediction from the fused group vector and the item embedding.
pub fn predict_logit(g: &mut Graph, model: &Model, fused: Var, item: Var) -> Result<Var> {
    let inter = g.mul(fused, item)?;
    let x = g.concat(&[fused, inter, item], Axis::Cols)?;
    let w = g.param(model.ids.pred_w);
    let b = g.param(model.ids.pred_b);
    let z = g.matmul_nt(x, w)?;
    g.add(z, b)
}

struct Builder<'g, 'p, 'c> {
    g: &'g mut Graph<'p>,
    model: &'p Model,
    ctx: &'c Context<'c>,
    ablation: Ablation,
    items: HashMap<usize, Var>,
    subpe: HashMap<(usize, usize), SubPe>,
    gpe: HashMap<(usize, usize), Pooled>,
}

impl<'g, 'p, 'c> Builder<'g, 'p, 'c> {
    fn item(&mut self, v: usize) -> Result<Var> {
        if let Some(&x) = self.items.get(&v) {
            return Ok(x);
        }
        let table = self.g.param(self.model.ids.item_emb);
        let x = self.g.rows(table, &[v])?;
        self.items.insert(v, x);
        Ok(x)
    }

    fn subpe(&mut self, group: usize, v: usize) -> Result<Var> {
        if let Some(s) = self.subpe.get(&(group, v)) {
            return Ok(s.h);
        }
        let e_v = self.item(v)?;
        let users = self.g.param(self.model.ids.user_emb);
        let w = self.g.param(self.model.ids.user_att_w);
        let b = self.g.param(self.model.ids.user_att_b);
        let assignment = &self.ctx.subsets[group];
        let mut slots = Vec::with_capacity(assignment.subsets.len());
        let mut members = Vec::with_capacity(assignment.subsets.len());
        for subset in &assignment.subsets {
            let rows = self.g.rows(users, subset)?;
            let (h, wts) = attention_pool(self.g, rows, e_v, w, b)?;
            slots.push(h);
            members.push(wts);
        }
        let (h, subset_weights) = subset_attention(self.g, self.model, &slots)?;
        self.subpe.insert(
            (group, v),
            SubPe {
                h,
                members,
                subset_weights,
            },
        );
        Ok(h)
    }

    fn gpe(&mut self, group: usize, v: usize) -> Result<Var> {
        if let Some(p) = self.gpe.get(&(group, v)) {
            return Ok(p.h);
        }
        let e_v = self.item(v)?;
        let users = self.g.param(self.model.ids.user_emb);
        let w = self.g.param(self.model.ids.group_att_w);
        let b = self.g.param(self.model.ids.group_att_b);
        let rows = self.g.rows(users, &self.ctx.dataset.groups[group])?;
        let (h, weights) = attention_pool(self.g, rows, e_v, w, b)?;
        self.gpe.insert((group, v), Pooled { h, weights });
        Ok(h)
    }

    /// Batch-stream output for `local` in `graph`, with every neighbour's
    /// initial state evaluated against item `v`.
    fn batch_stream(&mut self, graph: &GroupGraph, local: usize, v: usize) -> Result<Var> {
        let layers = self.model.config.layers;
        let sets: Vec<Vec<usize>> = (0..=layers)
            .map(|k| graph.neighbourhood(local, layers - k))
            .collect();
        let mut init = Vec::with_capacity(sets[0].len());
        for &node in &sets[0] {
            let group = graph.nodes[node];
            init.push(if self.ablation.use_subpe {
                self.subpe(group, v)?
            } else {
                self.gpe(group, v)?
            });
        }
        let h0 = self.g.concat(&init, Axis::Rows)?;
        let blocks: Vec<Tensor> = (1..=layers)
            .map(|k| {
                let cols = &sets[k - 1];
                let mut block = Tensor::zeros(sets[k].len(), cols.len());
                for (r, &i) in sets[k].iter().enumerate() {
                    for &(j, a) in &graph.normalized[i] {
                        let c = cols.binary_search(&j).expect("neighbour inside the wider hop set");
                        block.set(r, c, a);
                    }
                }
                block
            })
            .collect();
        let weights: Vec<Var> = self
            .model
            .ids
            .batch_layers
            .iter()
            .map(|&id| self.g.param(id))
            .collect();
        propagate(self.g, h0, &blocks, &weights)
    }
}

/// Runs the model on `batch` inside `g`, returning one logit per entry.
pub fn forward_batch<'p>(
    g: &mut Graph<'p>,
    model: &'p Model,
    ctx: &Context,
    batch: &[(usize, usize)],
    ablation: Ablation,
    mode: BatchGraphMode,
    record: bool,
) -> Result<ForwardOutput> {
    ablation.validate()?;
    if batch.is_empty() {
        return Err(MgamError::usage("empty batch"));
    }
    let ds = ctx.dataset;
    for &(grp, item) in batch {
        if grp >= ds.n_groups || item >= ds.n_items {
            return Err(MgamError::usage(format!("pair ({grp}, {item}) out of range")));
        }
    }
    if ctx.subsets.len() != ds.n_groups {
        return Err(MgamError::usage("subset assignments do not cover every group"));
    }
    let mut b = Builder {
        g,
        model,
        ctx,
        ablation,
        items: HashMap::new(),
        subpe: HashMap::new(),
        gpe: HashMap::new(),
    };

    let mut global_out = None;
    let mut batch_graph = None;
    if ablation.use_suppe {
        let table = b.g.param(model.ids.group_emb);
        let weights: Vec<Var> = model.ids.global_layers.iter().map(|&id| b.g.param(id)).collect();
        let blocks = vec![ctx.global_dense.clone(); weights.len()];
        global_out = Some(propagate(b.g, table, &blocks, &weights)?);
        batch_graph = Some(match mode {
            BatchGraphMode::Global => ctx.graph.clone(),
            BatchGraphMode::Induced => {
                let mut groups: Vec<usize> = batch.iter().map(|p| p.0).collect();
                groups.sort_unstable();
                groups.dedup();
                ctx.graph.induce_batch_subgraph(&groups)?
            }
        });
    }
    let local_of: HashMap<usize, usize> = batch_graph
        .as_ref()
        .map(|bg| bg.nodes.iter().enumerate().map(|(l, &gid)| (gid, l)).collect())
        .unwrap_or_default();

    let mut logits = Vec::with_capacity(batch.len());
    let mut states: Vec<GroupForwardState> = Vec::new();
    let mut done: HashMap<(usize, usize), usize> = HashMap::new();
    for &(grp, v) in batch {
        if let Some(&k) = done.get(&(grp, v)) {
            logits.push(logits[k]);
            if record {
                states.push(states[k].clone());
            }
            continue;
        }
        let mut rows = Vec::with_capacity(3);
        let mut names = Vec::with_capacity(3);
        let subpe = if ablation.use_subpe {
            let h = b.subpe(grp, v)?;
            rows.push(h);
            names.push("subpe");
            Some(h)
        } else {
            None
        };
        let gpe = if ablation.use_gpe {
            let h = b.gpe(grp, v)?;
            rows.push(h);
            names.push("gpe");
            Some(h)
        } else {
            None
        };
        let mut suppe = None;
        if let (Some(global), Some(bg)) = (global_out, batch_graph.as_ref()) {
            let gl = b.g.rows(global, &[grp])?;
            let bt = b.batch_stream(bg, local_of[&grp], v)?;
            let h = b.g.concat(&[gl, bt], Axis::Cols)?;
            let p = b.g.param(model.ids.proj_w);
            let pb = b.g.param(model.ids.proj_b);
            let projected = b.g.matmul_nt(h, p)?;
            let projected = b.g.add(projected, pb)?;
            rows.push(projected);
            names.push("suppe");
            suppe = Some(h);
        }
        let (fused, attention) = fuse(b.g, &rows)?;
        let e_v = b.item(v)?;
        let z = predict_logit(b.g, model, fused, e_v)?;
        done.insert((grp, v), logits.len());
        logits.push(z);

        if record {
            let g = &*b.g;
            let assignment = &ctx.subsets[grp];
            let (member_weights, subset_weights) = match b.subpe.get(&(grp, v)) {
                Some(s) => (
                    s.members
                        .iter()
                        .zip(&assignment.subsets)
                        .map(|(w, sub)| weights_of(g, *w, sub.len()))
                        .collect(),
                    weights_of(g, s.subset_weights, assignment.subsets.len()),
                ),
                None => (Vec::new(), Vec::new()),
            };
            let gpe_weights = b
                .gpe
                .get(&(grp, v))
                .map(|p| weights_of(g, p.weights, ds.groups[grp].len()))
                .unwrap_or_default();
            let fusion_attention = match attention {
                Some(a) => {
                    let t = g.value(a);
                    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
                }
                None => vec![vec![1.0]],
            };
            let row_of = |v: Option<Var>| v.map(|x| g.value(x).data().to_vec());
            states.push(GroupForwardState {
                group: grp,
                item: v,
                subsets: assignment.subsets.clone(),
                member_weights,
                subset_weights,
                gpe_weights,
                fusion_rows: names,
                fusion_attention,
                h_subpe: row_of(subpe),
                h_gpe: row_of(gpe),
                h_suppe: row_of(suppe),
                h_fusion: g.value(fused).data().to_vec(),
                score: sigmoid(g.value(z).item()),
            });
        }
    }
    Ok(ForwardOutput { logits, states })
}

/// Probabilities for each pair, without keeping the tape.
pub fn score_batch(
    model: &Model,
    ctx: &Context,
    batch: &[(usize, usize)],
    ablation: Ablation,
    mode: BatchGraphMode,
) -> Result<Vec<f64>> {
    let mut g = Graph::new(&model.params);
    let out = forward_batch(&mut g, model, ctx, batch, ablation, mode, false)?;
    Ok(out.logits.iter().map(|&z| sigmoid(g.value(z).item())).collect())
}
