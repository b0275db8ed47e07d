//! End-to-end pipeline shared by the CLI and the tests.

use std::time::Instant;

use crate::cluster::{assign_subsets, cluster_users, SubsetAssignment};
use crate::config::Config;
use crate::data::{split_leave_one_out, Dataset, Split};
use crate::error::Result;
use crate::eval::{evaluate, MetricReport, MgamScorer};
use crate::graph::GroupGraph;
use crate::model::{Ablation, Context, Model, Sizes};
use crate::rng::{self, Stream};
use crate::train::{train_epoch, AdamState, EpochStats};

/// A dataset with its split, subset assignment and group graph.
pub struct Prepared {
    pub dataset: Dataset,
    pub split: Split,
    pub subsets: Vec<SubsetAssignment>,
    pub graph: GroupGraph,
}

impl Prepared {
    pub fn new(dataset: Dataset, cfg: &Config) -> Result<Self> {
        let split = split_leave_one_out(&dataset, cfg.seed);
        let labels = cluster_users(
            &dataset,
            cfg.num_subsets,
            cfg.kmeans_max_iters,
            cfg.kmeans_restarts,
            cfg.seed,
        )?;
        let subsets = assign_subsets(&dataset, &labels);
        let graph = GroupGraph::build_co_membership(&dataset.groups, cfg.graph_weighted);
        Ok(Prepared {
            dataset,
            split,
            subsets,
            graph,
        })
    }

    pub fn context(&self) -> Context<'_> {
        Context::new(&self.dataset, &self.subsets, &self.graph)
    }

    pub fn sizes(&self) -> Sizes {
        Sizes {
            n_users: self.dataset.n_users,
            n_items: self.dataset.n_items,
            n_groups: self.dataset.n_groups,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stats: EpochStats,
    pub wall_seconds: f64,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,mean_loss,triplet_mean,point_mean,wall_seconds\n";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.8},{:.8},{:.8},{:.3}\n",
            self.epoch, self.stats.mean_loss, self.stats.triplet_mean, self.stats.point_mean, self.wall_seconds
        )
    }
}

/// Trains a fresh model for `cfg.epochs` epochs, reporting each epoch.
pub fn train_model(
    prep: &Prepared,
    cfg: &Config,
    ablation: Ablation,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, AdamState)> {
    ablation.validate()?;
    let tcfg = cfg.train_config();
    tcfg.validate()?;
    let mut model = Model::init(cfg.model_config(), prep.sizes())?;
    let mut adam = AdamState::new(&model.params);
    let mut rng = rng::stream(cfg.seed, Stream::Training);
    let ctx = prep.context();
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        let stats = train_epoch(&mut model, &mut adam, &ctx, &prep.split, &tcfg, ablation, &mut rng)?;
        on_epoch(&EpochRecord {
            epoch,
            stats,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, adam))
}

pub fn evaluate_model(
    prep: &Prepared,
    model: &Model,
    cfg: &Config,
    ablation: Ablation,
    jobs: usize,
) -> Result<MetricReport> {
    let ctx = prep.context();
    let scorer = MgamScorer {
        model,
        ctx: &ctx,
        ablation,
    };
    evaluate(
        &scorer,
        &prep.dataset,
        &prep.split,
        cfg.eval_negatives,
        &cfg.ks,
        cfg.seed,
        jobs,
    )
}
