#![allow(dead_code)]

use mgam::cluster::{partition_group, SubsetAssignment};
use mgam::data::{Dataset, IdMap};
use mgam::graph::GroupGraph;
use mgam::model::{Ablation, BatchGraphMode, Model, ModelConfig, Sizes};
use mgam::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Toy {
    pub ds: Dataset,
    pub subsets: Vec<SubsetAssignment>,
    pub graph: GroupGraph,
    pub model: Model,
}

/// Two groups of four users sharing user 3, ten items, `d = 8`, `l = 2`.
/// Every parameter (biases included) is drawn uniformly from ±0.5.
pub fn toy(m: usize, seed: u64) -> Toy {
    let user_items = vec![
        vec![0, 1, 4],
        vec![1, 2],
        vec![0, 2, 3],
        vec![3, 5],
        vec![5, 6, 9],
        vec![6, 7],
        vec![7, 8, 9],
        vec![4, 8],
    ];
    let groups = vec![vec![0, 1, 2, 3], vec![3, 4, 5, 6]];
    let group_pos = vec![vec![0, 1, 2], vec![5, 6, 7]];
    let ds = Dataset::from_indexed(
        user_items,
        groups,
        group_pos,
        IdMap::sequential(8),
        IdMap::sequential(10),
        IdMap::sequential(2),
    )
    .unwrap();
    let labels: Vec<usize> = if m == 1 {
        vec![0; 8]
    } else {
        vec![0, 0, 1, 1, 0, 1, 1, 0]
    };
    let subsets = ds
        .groups
        .iter()
        .enumerate()
        .map(|(g, mem)| partition_group(g, mem, &labels))
        .collect();
    let graph = GroupGraph::build_co_membership(&ds.groups, false);
    let sizes = Sizes {
        n_users: 8,
        n_items: 10,
        n_groups: 2,
    };
    let mut model = Model::init(ModelConfig::new(8, m, 2, seed), sizes).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    for id in 0..model.params.len() {
        let [r, c] = model.params.get(id).shape();
        model.set(id, Tensor::uniform(r, c, 0.5, &mut rng));
    }
    Toy {
        ds,
        subsets,
        graph,
        model,
    }
}

// ---------------------------------------------------------------------------
// Straight-line reference of the forward pass on plain vectors.

type Mat = Vec<Vec<f64>>;

fn p(model: &Model, name: &str) -> Mat {
    let t = model.params.get(model.params.id_of(name).unwrap());
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// `W x` for `W` stored as rows.
fn matvec(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| dotv(row, x)).collect()
}

fn weighted_sum(weights: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut out = vec![0.0; d];
    for (w, r) in weights.iter().zip(rows) {
        for k in 0..d {
            out[k] += w * r[k];
        }
    }
    out
}

fn pool(members: &[Vec<f64>], item: &[f64], w: f64, b: f64) -> Vec<f64> {
    let scores: Vec<f64> = members.iter().map(|e| relu(w * dotv(e, item) + b)).collect();
    weighted_sum(&softmax(&scores), members)
}

fn subpe(model: &Model, subsets: &[Vec<usize>], v: usize) -> Vec<f64> {
    let users = p(model, "user_emb");
    let item = &p(model, "item_emb")[v];
    let (w, b) = (p(model, "subpe.user_att.w")[0][0], p(model, "subpe.user_att.b")[0][0]);
    let d = model.config.dim;
    let m = model.config.num_subsets;
    let hs: Vec<Vec<f64>> = subsets
        .iter()
        .map(|s| {
            let rows: Vec<Vec<f64>> = s.iter().map(|&u| users[u].clone()).collect();
            pool(&rows, item, w, b)
        })
        .collect();
    if hs.len() == 1 {
        return hs[0].clone();
    }
    let ws = &p(model, "subpe.score.w")[0];
    let bs = p(model, "subpe.score.b")[0][0];
    let mut scores = Vec::new();
    for i in 0..hs.len() {
        let wi = p(model, &format!("subpe.slot{i}.w"));
        let wbar = p(model, &format!("subpe.slot{i}.w_bar"));
        let bi = &p(model, &format!("subpe.slot{i}.b"))[0];
        let mut others = Vec::new();
        for j in (0..m).filter(|&j| j != i) {
            others.extend(hs.get(j).cloned().unwrap_or_else(|| vec![0.0; d]));
        }
        let own = matvec(&wi, &hs[i]);
        let rest = matvec(&wbar, &others);
        let act: Vec<f64> = (0..d).map(|k| relu(own[k] + rest[k] + bi[k])).collect();
        scores.push(dotv(&act, ws) + bs);
    }
    weighted_sum(&softmax(&scores), &hs)
}

fn gpe(model: &Model, members: &[usize], v: usize) -> Vec<f64> {
    let users = p(model, "user_emb");
    let item = &p(model, "item_emb")[v];
    let rows: Vec<Vec<f64>> = members.iter().map(|&u| users[u].clone()).collect();
    pool(&rows, item, p(model, "gpe.att.w")[0][0], p(model, "gpe.att.b")[0][0])
}

/// Dense `D^{-1/2} (A + I) D^{-1/2}` over `nodes` (global group ids), where
/// two groups are adjacent when they share a member.
pub fn dense_norm(groups: &[Vec<usize>], nodes: &[usize]) -> Mat {
    let n = nodes.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let shared = groups[nodes[i]].iter().any(|u| groups[nodes[j]].contains(u));
            a[i][j] = if i == j || shared { 1.0 } else { 0.0 };
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect())
        .collect()
}

/// `relu(Â H W)` for each layer weight.
fn gcn(a: &Mat, h0: Mat, weights: &[Mat]) -> Mat {
    let mut h = h0;
    for w in weights {
        let n = h.len();
        let d = w[0].len();
        let ah: Mat = (0..n)
            .map(|i| {
                let mut row = vec![0.0; h[0].len()];
                for (j, hj) in h.iter().enumerate() {
                    for k in 0..row.len() {
                        row[k] += a[i][j] * hj[k];
                    }
                }
                row
            })
            .collect();
        h = ah
            .iter()
            .map(|row| (0..d).map(|c| relu((0..row.len()).map(|k| row[k] * w[k][c]).sum())).collect())
            .collect();
    }
    h
}

/// Reference logits for `batch`.
pub fn oracle_logits(
    model: &Model,
    ds: &Dataset,
    subsets: &[SubsetAssignment],
    batch: &[(usize, usize)],
    ablation: Ablation,
    mode: BatchGraphMode,
) -> Vec<f64> {
    let d = model.config.dim;
    let l = model.config.layers;
    let items = p(model, "item_emb");
    let global_nodes: Vec<usize> = (0..ds.n_groups).collect();
    let global_a = dense_norm(&ds.groups, &global_nodes);
    let global_w: Vec<Mat> = (0..l).map(|k| p(model, &format!("suppe.global{k}.w"))).collect();
    let batch_w: Vec<Mat> = (0..l).map(|k| p(model, &format!("suppe.batch{k}.w"))).collect();
    let global_h = gcn(&global_a, p(model, "group_emb"), &global_w);
    let batch_nodes: Vec<usize> = match mode {
        BatchGraphMode::Global => global_nodes.clone(),
        BatchGraphMode::Induced => {
            let mut g: Vec<usize> = batch.iter().map(|x| x.0).collect();
            g.sort();
            g.dedup();
            g
        }
    };
    let batch_a = dense_norm(&ds.groups, &batch_nodes);
    let proj = p(model, "suppe.proj.w");
    let proj_b = &p(model, "suppe.proj.b")[0];
    let pred = &p(model, "predict.w")[0];
    let pred_b = p(model, "predict.b")[0][0];

    batch
        .iter()
        .map(|&(g, v)| {
            let mut rows = Vec::new();
            if ablation.use_subpe {
                rows.push(subpe(model, &subsets[g].subsets, v));
            }
            if ablation.use_gpe {
                rows.push(gpe(model, &ds.groups[g], v));
            }
            if ablation.use_suppe {
                let h0: Mat = batch_nodes
                    .iter()
                    .map(|&n| {
                        if ablation.use_subpe {
                            subpe(model, &subsets[n].subsets, v)
                        } else {
                            gpe(model, &ds.groups[n], v)
                        }
                    })
                    .collect();
                let hb = gcn(&batch_a, h0, &batch_w);
                let local = batch_nodes.iter().position(|&n| n == g).unwrap();
                let mut cat = global_h[g].clone();
                cat.extend(&hb[local]);
                let pr = matvec(&proj, &cat);
                rows.push((0..d).map(|k| pr[k] + proj_b[k]).collect());
            }
            let k = rows.len();
            let fused = if k == 1 {
                rows[0].clone()
            } else {
                let mut f = vec![0.0; d];
                for i in 0..k {
                    let sims: Vec<f64> = (0..k).map(|j| dotv(&rows[i], &rows[j]) / (d as f64).sqrt()).collect();
                    let row = weighted_sum(&softmax(&sims), &rows);
                    for c in 0..d {
                        f[c] += row[c] / k as f64;
                    }
                }
                f
            };
            let e = &items[v];
            let mut x = fused.clone();
            x.extend((0..d).map(|c| fused[c] * e[c]));
            x.extend(e.iter().cloned());
            dotv(&x, pred) + pred_b
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Finite-difference check of the total loss.

use mgam::autodiff::{finite_difference_grad, max_relative_error, Graph};
use mgam::data::Instance;
use mgam::model::{forward_batch, Context};
use mgam::rng::{keyed, Stream};
use mgam::train::{build_triplets, total_loss};

/// Positives of both toy groups, each followed by one fixed negative.
pub fn toy_batch() -> Vec<Instance> {
    vec![
        Instance::positive(0, 0),
        Instance::negative(0, 8),
        Instance::positive(0, 2),
        Instance::negative(0, 5),
        Instance::positive(1, 6),
        Instance::negative(1, 1),
        Instance::positive(1, 7),
        Instance::negative(1, 3),
    ]
}

pub fn toy_loss(t: &Toy, model: &Model, batch: &[Instance], ablation: Ablation) -> (f64, Vec<Tensor>) {
    let ctx = Context::new(&t.ds, &t.subsets, &t.graph);
    let pairs: Vec<(usize, usize)> = batch.iter().map(|i| (i.group, i.item)).collect();
    let labels: Vec<u8> = batch.iter().map(|i| i.label).collect();
    let triplets = build_triplets(batch, &mut keyed(1, Stream::Training, 0));
    let mut g = Graph::new(&model.params);
    let out = forward_batch(&mut g, model, &ctx, &pairs, ablation, BatchGraphMode::Induced, false).unwrap();
    let loss = total_loss(&mut g, &out.logits, &labels, &triplets, 0.5, 1.0).unwrap();
    let grads = g.backward(loss.total).unwrap();
    (g.value(loss.total).item(), grads)
}

/// Worst relative error per parameter tensor, `(name, error)`.
pub fn gradient_errors(t: &Toy, ablation: Ablation) -> Vec<(String, f64)> {
    let batch = toy_batch();
    let (_, grads) = toy_loss(t, &t.model, &batch, ablation);
    let mut out = Vec::new();
    for id in 0..t.model.params.len() {
        let x = t.model.params.get(id).clone();
        let mut probe = t.model.clone();
        let numeric = finite_difference_grad(
            |v| {
                probe.set(id, v.clone());
                toy_loss(t, &probe, &batch, ablation).0
            },
            &x,
            1e-5,
        );
        out.push((
            t.model.params.name(id).to_string(),
            max_relative_error(&grads[id], &numeric, 1e-6),
        ));
    }
    out
}
