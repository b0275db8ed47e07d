//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cluster::format_subsets;
use crate::config::{parse_usize_list, Config};
use crate::data::{generate_synthetic, Dataset, SyntheticParams};
use crate::error::{MgamError, Result};
use crate::eval::{
    evaluate, metrics_rows, train_mf, write_reports, Aggregation, MetricReport, MfConfig, MfScorer, METRICS_HEADER,
};
use crate::experiment::{evaluate_model, train_model, Prepared, TRAIN_LOG_HEADER};
use crate::model::{forward_batch, Ablation, BatchGraphMode, Model};
use crate::train::{load_checkpoint, save_checkpoint};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

#[derive(Debug, Parser)]
#[command(name = "mgam", version, about = "Multi-granularity attention model for group recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Dataset directory holding user_item.tsv, groups.tsv and group_items.tsv.
    #[arg(long)]
    pub data: PathBuf,
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted synthetic dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n_users: usize,
        #[arg(long, default_value_t = 500)]
        n_items: usize,
        #[arg(long, default_value_t = 60)]
        n_groups: usize,
        #[arg(long, default_value_t = 3)]
        n_cohorts: usize,
        #[arg(long, default_value_t = 3)]
        group_size_min: usize,
        #[arg(long, default_value_t = 6)]
        group_size_max: usize,
        #[arg(long, default_value_t = 8)]
        latent_dim: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 10)]
        positives_per_group: usize,
        #[arg(long, default_value_t = 20)]
        items_per_user: usize,
        #[arg(long, default_value_t = 0.25)]
        cross_cohort_fraction: f64,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint; writes metrics.csv.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ckpt: PathBuf,
        /// Output directory; defaults to the checkpoint directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        ks: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train and evaluate with granularities removed.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// Module to remove (subpe, gpe, suppe); repeatable. Without it, the
        /// full model and every single removal are run.
        #[arg(long)]
        disable: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train and evaluate for several subset counts.
    SweepSubsets {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "1,2,3,5,7")]
        m_values: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print the top-K items for one group.
    Recommend {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        group_id: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Also print attention weights and embeddings as JSON.
        #[arg(long)]
        explain: bool,
    },
    /// Print the group co-membership graph as TSV edges.
    DumpGraph {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print each group's subsets as TSV.
    DumpSubsets {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train the per-user scorer and evaluate avg/lm/ms aggregation.
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "avg,lm,ms")]
        strategies: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn resolve(run: &RunArgs) -> Result<Config> {
    Config::resolve(run.config.as_deref(), &run.overrides)
}

fn persist_config(dir: &Path, cfg: &Config) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RESOLVED_CONFIG_FILE), cfg.to_text())?;
    Ok(())
}

fn echo(cfg: &Config) {
    print!("# resolved config\n{}", cfg.to_text());
}

fn load(run: &RunArgs, cfg: &Config) -> Result<Prepared> {
    let ds = Dataset::load_dir(&run.data)?;
    Prepared::new(ds, cfg)
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            out,
            seed,
            n_users,
            n_items,
            n_groups,
            n_cohorts,
            group_size_min,
            group_size_max,
            latent_dim,
            noise,
            positives_per_group,
            items_per_user,
            cross_cohort_fraction,
        } => {
            let params = SyntheticParams {
                n_users,
                n_items,
                n_groups,
                group_size_min,
                group_size_max,
                n_cohorts,
                latent_dim,
                noise,
                positives_per_group,
                items_per_user,
                cross_cohort_fraction,
            };
            let data = generate_synthetic(&params, seed)?;
            data.dataset.write_dir(&out)?;
            let meta = serde_json::json!({ "generator": "planted", "seed": seed, "params": params });
            fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
            println!(
                "wrote {} users, {} items, {} groups to {}",
                data.dataset.n_users,
                data.dataset.n_items,
                data.dataset.n_groups,
                out.display()
            );
            Ok(())
        }
        Command::Train { run, out } => {
            let cfg = resolve(&run)?;
            let ablation = cfg.ablation()?;
            echo(&cfg);
            let prep = load(&run, &cfg)?;
            persist_config(&out, &cfg)?;
            let mut log = String::from(TRAIN_LOG_HEADER);
            let (model, adam) = train_model(&prep, &cfg, ablation, |r| {
                log.push_str(&r.csv_row());
                println!(
                    "epoch {:>4}  loss {:.5}  triplet {:.5}  point {:.5}",
                    r.epoch, r.stats.mean_loss, r.stats.triplet_mean, r.stats.point_mean
                );
            })?;
            fs::write(out.join("train_log.csv"), log)?;
            save_checkpoint(&out, &model, Some(&adam), &cfg.to_json())?;
            println!("checkpoint written to {}", out.display());
            Ok(())
        }
        Command::Eval {
            run,
            ckpt,
            out,
            ks,
            jobs,
        } => {
            let mut cfg = checkpoint_config(&run, &ckpt)?;
            if let Some(ks) = ks {
                cfg.ks = parse_usize_list("ks", &ks).map_err(|e| MgamError::usage(e.to_string()))?;
            }
            let ablation = cfg.ablation()?;
            echo(&cfg);
            let out = out.unwrap_or_else(|| ckpt.clone());
            let prep = load(&run, &cfg)?;
            let model = load_checkpoint(&ckpt, Some(&cfg.model_config()))?.model;
            check_sizes(&model, &prep)?;
            let report = evaluate_model(&prep, &model, &cfg, ablation, jobs)?;
            persist_config(&out, &cfg)?;
            write_reports(&out, &prep.dataset, &[(ablation.label(), report.clone())], cfg.seed)?;
            print!("{}{}", METRICS_HEADER, metrics_rows(&ablation.label(), &report, cfg.seed));
            Ok(())
        }
        Command::Ablate {
            run,
            out,
            disable,
            seeds,
            jobs,
        } => {
            let cfg = resolve(&run)?;
            let masks = if disable.is_empty() {
                let mut m = vec![Ablation::FULL];
                for name in ["subpe", "gpe", "suppe"] {
                    m.push(Ablation::without(name)?);
                }
                m
            } else {
                let mut a = Ablation::FULL;
                for d in &disable {
                    a.disable(d)?;
                }
                a.validate()?;
                vec![a]
            };
            if seeds == 0 {
                return Err(MgamError::usage("--seeds must be at least 1"));
            }
            echo(&cfg);
            persist_config(&out, &cfg)?;
            let ds = Dataset::load_dir(&run.data)?;
            let mut rows = String::from(METRICS_HEADER);
            let mut summary = String::from("model,K,HR_mean,NDCG_mean,seeds\n");
            let mut sums: Vec<Vec<(f64, f64)>> = vec![vec![(0.0, 0.0); cfg.ks.len()]; masks.len()];
            for s in 0..seeds {
                let mut c = cfg.clone();
                c.seed = cfg.seed + s as u64;
                let prep = Prepared::new(ds.clone(), &c)?;
                for (mi, &mask) in masks.iter().enumerate() {
                    let (model, _) = train_model(&prep, &c, mask, |_| {})?;
                    let report = evaluate_model(&prep, &model, &c, mask, jobs)?;
                    let text = metrics_rows(&mask.label(), &report, c.seed);
                    print!("{text}");
                    rows.push_str(&text);
                    for (ki, acc) in sums[mi].iter_mut().enumerate() {
                        acc.0 += report.hr[ki];
                        acc.1 += report.ndcg[ki];
                    }
                }
            }
            for (mask, acc) in masks.iter().zip(&sums) {
                for (k, (h, n)) in cfg.ks.iter().zip(acc) {
                    let _ = writeln!(
                        summary,
                        "{},{k},{:.6},{:.6},{seeds}",
                        mask.label(),
                        h / seeds as f64,
                        n / seeds as f64
                    );
                }
            }
            fs::write(out.join("metrics.csv"), rows)?;
            fs::write(out.join("ablation_summary.csv"), &summary)?;
            print!("{summary}");
            Ok(())
        }
        Command::SweepSubsets {
            run,
            out,
            m_values,
            jobs,
        } => {
            let cfg = resolve(&run)?;
            let ablation = cfg.ablation()?;
            let ms = parse_usize_list("m-values", &m_values).map_err(|e| MgamError::usage(e.to_string()))?;
            echo(&cfg);
            persist_config(&out, &cfg)?;
            let ds = Dataset::load_dir(&run.data)?;
            let mut csv = String::from("M");
            for k in &cfg.ks {
                let _ = write!(csv, ",HR@{k},NDCG@{k}");
            }
            csv.push_str(",n_groups,seed\n");
            for m in ms {
                let mut c = cfg.clone();
                c.num_subsets = m;
                let prep = Prepared::new(ds.clone(), &c)?;
                let (model, _) = train_model(&prep, &c, ablation, |_| {})?;
                let report = evaluate_model(&prep, &model, &c, ablation, jobs)?;
                let mut row = m.to_string();
                for i in 0..c.ks.len() {
                    let _ = write!(row, ",{:.6},{:.6}", report.hr[i], report.ndcg[i]);
                }
                let _ = writeln!(row, ",{},{}", report.n_groups(), c.seed);
                print!("{row}");
                csv.push_str(&row);
            }
            fs::write(out.join("sweep_subsets.csv"), csv)?;
            Ok(())
        }
        Command::Recommend {
            run,
            ckpt,
            group_id,
            k,
            explain,
        } => {
            let cfg = checkpoint_config(&run, &ckpt)?;
            let ablation = cfg.ablation()?;
            let prep = load(&run, &cfg)?;
            let model = load_checkpoint(&ckpt, Some(&cfg.model_config()))?.model;
            check_sizes(&model, &prep)?;
            let ds = &prep.dataset;
            let group = ds
                .group_ids
                .index_of(&group_id)
                .ok_or_else(|| MgamError::usage(format!("unknown group id `{group_id}`")))?;
            let seen = prep.split.train_positives(ds.n_groups);
            let candidates: Vec<usize> = (0..ds.n_items)
                .filter(|i| seen[group].binary_search(i).is_err())
                .collect();
            let text = recommend(&prep, &model, ablation, group, &candidates, k, explain)?;
            print!("{text}");
            Ok(())
        }
        Command::DumpGraph { run } => {
            let cfg = resolve(&run)?;
            let ds = Dataset::load_dir(&run.data)?;
            let graph = crate::graph::GroupGraph::build_co_membership(&ds.groups, cfg.graph_weighted);
            let mut s = String::new();
            for (i, row) in graph.adjacency.iter().enumerate() {
                for &(j, w) in row {
                    if i < j {
                        let _ = writeln!(s, "{}\t{}\t{}", ds.group_ids.id(i), ds.group_ids.id(j), w);
                    }
                }
            }
            print!("{s}");
            Ok(())
        }
        Command::DumpSubsets { run } => {
            let cfg = resolve(&run)?;
            let prep = load(&run, &cfg)?;
            print!("{}", format_subsets(&prep.dataset, &prep.subsets));
            Ok(())
        }
        Command::Baseline {
            run,
            out,
            strategies,
            jobs,
        } => {
            let cfg = resolve(&run)?;
            let strategies: Vec<Aggregation> = strategies
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_>>()?;
            echo(&cfg);
            persist_config(&out, &cfg)?;
            let prep = load(&run, &cfg)?;
            let mf = train_mf(
                &prep.dataset,
                &MfConfig {
                    dim: cfg.embedding_dim,
                    epochs: cfg.epochs,
                    lr: cfg.learning_rate,
                    batch_size: cfg.batch_size,
                    negatives: cfg.train_negatives,
                    seed: cfg.seed,
                },
            )?;
            let mut reports: Vec<(String, MetricReport)> = Vec::new();
            for strategy in strategies {
                let scorer = MfScorer {
                    mf: &mf,
                    dataset: &prep.dataset,
                    strategy,
                };
                let r = evaluate(
                    &scorer,
                    &prep.dataset,
                    &prep.split,
                    cfg.eval_negatives,
                    &cfg.ks,
                    cfg.seed,
                    jobs,
                )?;
                print!("{}", metrics_rows(strategy.label(), &r, cfg.seed));
                reports.push((strategy.label().to_string(), r));
            }
            write_reports(&out, &prep.dataset, &reports, cfg.seed)
        }
    }
}

/// Config stored with a checkpoint, then the user's file and overrides.
fn checkpoint_config(run: &RunArgs, ckpt: &Path) -> Result<Config> {
    let mut cfg = Config::default();
    let stored = ckpt.join(RESOLVED_CONFIG_FILE);
    if stored.exists() {
        cfg.apply_text(&fs::read_to_string(stored)?)?;
    }
    if let Some(p) = &run.config {
        let text = fs::read_to_string(p).map_err(|e| MgamError::LoadFile {
            path: p.clone(),
            msg: e.to_string(),
        })?;
        cfg.apply_text(&text)?;
    }
    for o in &run.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| MgamError::config(o.as_str(), "expected `key=value`"))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn check_sizes(model: &Model, prep: &Prepared) -> Result<()> {
    if model.sizes != prep.sizes() {
        return Err(MgamError::Checkpoint(format!(
            "checkpoint was trained on {:?}, dataset has {:?}",
            model.sizes,
            prep.sizes()
        )));
    }
    Ok(())
}

/// Top-`k` lines `rank<TAB>item_id<TAB>score`, then optional JSON explanations.
pub fn recommend(
    prep: &Prepared,
    model: &Model,
    ablation: Ablation,
    group: usize,
    candidates: &[usize],
    k: usize,
    explain: bool,
) -> Result<String> {
    let ctx = prep.context();
    let scores = crate::model::score_batch(
        model,
        &ctx,
        &candidates.iter().map(|&v| (group, v)).collect::<Vec<_>>(),
        ablation,
        BatchGraphMode::Global,
    )?;
    let ranked = crate::eval::RankedList::new(candidates, &scores)?;
    let mut s = String::new();
    for (r, (&item, score)) in ranked.items.iter().zip(&ranked.scores).take(k).enumerate() {
        let _ = writeln!(s, "{}\t{}\t{:.6}", r + 1, prep.dataset.items.id(item), score);
    }
    if explain {
        let pairs: Vec<(usize, usize)> = ranked.top(k).iter().map(|&v| (group, v)).collect();
        let mut g = crate::autodiff::Graph::new(&model.params);
        let out = forward_batch(&mut g, model, &ctx, &pairs, ablation, BatchGraphMode::Global, true)?;
        s.push_str(&serde_json::to_string_pretty(&out.states)?);
        s.push('\n');
    }
    Ok(s)
}
