//! Leave-one-out ranking evaluation and the member-aggregation baselines.

mod baseline;
mod metrics;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

pub use baseline::{baseline_aggregate, train_mf, Aggregation, MfConfig, MfModel, MfScorer};
pub use metrics::{hr_at_k, ndcg_at_k, RankedList};

use crate::data::{sample_negatives, Dataset, PlantedTruth, Split, TestCase};
use crate::error::{MgamError, Result};
use crate::model::{score_batch, Ablation, BatchGraphMode, Context, Model};
use crate::rng::{keyed, Stream};

/// Anything that scores candidate items for a group; higher is better.
pub trait GroupScorer: Sync {
    fn score(&self, group: usize, items: &[usize]) -> Result<Vec<f64>>;
}

/// Scores with a trained model over the whole group graph, so a pair's score
/// does not depend on the other candidates.
pub struct MgamScorer<'a> {
    pub model: &'a Model,
    pub ctx: &'a Context<'a>,
    pub ablation: Ablation,
}

impl GroupScorer for MgamScorer<'_> {
    fn score(&self, group: usize, items: &[usize]) -> Result<Vec<f64>> {
        let batch: Vec<(usize, usize)> = items.iter().map(|&v| (group, v)).collect();
        score_batch(self.model, self.ctx, &batch, self.ablation, BatchGraphMode::Global)
    }
}

/// Ranks by the planted mean member utility of synthetic data.
pub struct OracleScorer<'a> {
    pub truth: &'a PlantedTruth,
    pub dataset: &'a Dataset,
}

impl GroupScorer for OracleScorer<'_> {
    fn score(&self, group: usize, items: &[usize]) -> Result<Vec<f64>> {
        let members = &self.dataset.groups[group];
        Ok(items
            .iter()
            .map(|&v| self.truth.group_utility(members, v))
            .collect())
    }
}

pub fn rank_candidates(scorer: &dyn GroupScorer, group: usize, candidates: &[usize]) -> Result<RankedList> {
    if candidates.is_empty() {
        return Err(MgamError::usage("cannot rank an empty candidate list"));
    }
    let scores = scorer.score(group, candidates)?;
    RankedList::new(candidates, &scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseResult {
    pub group: usize,
    pub item: usize,
    /// 1-indexed rank of the held-out item among its candidates.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    /// Mean HR@K, aligned with `ks`.
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub cases: Vec<CaseResult>,
}

impl MetricReport {
    pub fn n_groups(&self) -> usize {
        self.cases.len()
    }

    fn lookup(&self, k: usize, values: &[f64]) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| values[i])
    }

    pub fn hr_at(&self, k: usize) -> Option<f64> {
        self.lookup(k, &self.hr)
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.lookup(k, &self.ndcg)
    }

    pub fn from_cases(ks: &[usize], cases: Vec<CaseResult>) -> Self {
        let n = cases.len().max(1) as f64;
        let hr = ks
            .iter()
            .map(|&k| cases.iter().map(|c| hr_at_k(c.position, k)).sum::<f64>() / n)
            .collect();
        let ndcg = ks
            .iter()
            .map(|&k| cases.iter().map(|c| ndcg_at_k(c.position, k)).sum::<f64>() / n)
            .collect();
        MetricReport {
            ks: ks.to_vec(),
            hr,
            ndcg,
            cases,
        }
    }
}

/// Candidates of one test case: the held-out item followed by its negatives,
/// drawn from a stream keyed by the group so the result is order-independent.
pub fn test_candidates(ds: &Dataset, case: TestCase, eval_negatives: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = keyed(seed, Stream::Eval, case.group as u64);
    let mut out = vec![case.item];
    out.extend(sample_negatives(ds, case.group, eval_negatives, &[], &mut rng)?);
    Ok(out)
}

/// Ranks every held-out positive against `eval_negatives` sampled negatives.
/// `jobs > 1` spreads groups over a thread pool with identical results.
pub fn evaluate(
    scorer: &dyn GroupScorer,
    ds: &Dataset,
    split: &Split,
    eval_negatives: usize,
    ks: &[usize],
    seed: u64,
    jobs: usize,
) -> Result<MetricReport> {
    if split.test.is_empty() {
        return Err(MgamError::usage("the split has no test cases"));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(MgamError::usage("K values must be positive"));
    }
    let one = |case: &TestCase| -> Result<CaseResult> {
        let candidates = test_candidates(ds, *case, eval_negatives, seed)?;
        let ranked = rank_candidates(scorer, case.group, &candidates)?;
        Ok(CaseResult {
            group: case.group,
            item: case.item,
            position: ranked.position(case.item).expect("held-out item is a candidate"),
        })
    };
    let cases: Vec<CaseResult> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| MgamError::usage(format!("thread pool: {e}")))?;
        pool.install(|| split.test.par_iter().map(one).collect::<Result<_>>())?
    } else {
        split.test.iter().map(one).collect::<Result<_>>()?
    };
    Ok(MetricReport::from_cases(ks, cases))
}

pub const METRICS_HEADER: &str = "model,K,HR,NDCG,n_groups,seed\n";

/// `metrics.csv` rows for one labelled report.
pub fn metrics_rows(label: &str, report: &MetricReport, seed: u64) -> String {
    let mut s = String::new();
    for (i, k) in report.ks.iter().enumerate() {
        let _ = writeln!(
            s,
            "{label},{k},{:.6},{:.6},{},{seed}",
            report.hr[i],
            report.ndcg[i],
            report.n_groups()
        );
    }
    s
}

pub fn detail_rows(label: &str, ds: &Dataset, report: &MetricReport) -> String {
    let mut s = String::new();
    for c in &report.cases {
        let _ = write!(s, "{label},{},{},{}", ds.group_ids.id(c.group), ds.items.id(c.item), c.position);
        for &k in &report.ks {
            let _ = write!(s, ",{},{:.6}", hr_at_k(c.position, k), ndcg_at_k(c.position, k));
        }
        s.push('\n');
    }
    s
}

pub fn detail_header(ks: &[usize]) -> String {
    let mut s = String::from("model,group_id,item_id,position");
    for k in ks {
        let _ = write!(s, ",HR@{k},NDCG@{k}");
    }
    s.push('\n');
    s
}

/// Writes `metrics.csv` and `metrics_detail.csv` for labelled reports.
pub fn write_reports(dir: &Path, ds: &Dataset, reports: &[(String, MetricReport)], seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut main = String::from(METRICS_HEADER);
    let mut detail = detail_header(reports.first().map(|r| r.1.ks.as_slice()).unwrap_or(&[]));
    for (label, report) in reports {
        main.push_str(&metrics_rows(label, report, seed));
        detail.push_str(&detail_rows(label, ds, report));
    }
    std::fs::write(dir.join("metrics.csv"), main)?;
    std::fs::write(dir.join("metrics_detail.csv"), detail)?;
    Ok(())
}
