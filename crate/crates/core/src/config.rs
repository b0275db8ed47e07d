//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{MgamError, Result};
use crate::model::{Ablation, ModelConfig};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub embedding_dim: usize,
    pub num_subsets: usize,
    pub gcn_layers: usize,
    pub lambda1: f64,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_negatives: usize,
    pub eval_negatives: usize,
    pub ks: Vec<usize>,
    pub kmeans_max_iters: usize,
    pub kmeans_restarts: usize,
    pub seed: u64,
    #[serde(rename = "graph.weighted")]
    pub graph_weighted: bool,
    pub ablate: Vec<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            embedding_dim: 32,
            num_subsets: 3,
            gcn_layers: 2,
            lambda1: 0.5,
            margin: 1.0,
            learning_rate: 0.001,
            batch_size: 256,
            epochs: 100,
            train_negatives: 1,
            eval_negatives: 100,
            ks: vec![5, 10],
            kmeans_max_iters: 100,
            kmeans_restarts: 3,
            seed: 42,
            graph_weighted: false,
            ablate: Vec::new(),
        }
    }
}

pub const KEYS: [&str; 16] = [
    "embedding_dim",
    "num_subsets",
    "gcn_layers",
    "lambda1",
    "margin",
    "learning_rate",
    "batch_size",
    "epochs",
    "train_negatives",
    "eval_negatives",
    "ks",
    "kmeans_max_iters",
    "kmeans_restarts",
    "seed",
    "graph.weighted",
    "ablate",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| MgamError::config(key, format!("cannot parse `{value}`")))
}

fn positive(key: &str, value: &str) -> Result<usize> {
    let v: usize = parse(key, value)?;
    if v == 0 {
        return Err(MgamError::config(key, "must be positive"));
    }
    Ok(v)
}

fn non_negative(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse(key, value)?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(MgamError::config(key, "must be a finite non-negative number"));
    }
    Ok(v)
}

fn csv_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Parses a comma-separated list of positive integers.
pub fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let out = csv_list(value).map(|s| positive(key, s)).collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(MgamError::config(key, "needs at least one value"));
    }
    Ok(out)
}

impl Config {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let value = raw.trim().trim_matches('"');
        match key {
            "embedding_dim" => {
                let d = positive(key, value)?;
                if d % 2 != 0 {
                    return Err(MgamError::config(key, "must be even"));
                }
                self.embedding_dim = d;
            }
            "num_subsets" => self.num_subsets = positive(key, value)?,
            "gcn_layers" => self.gcn_layers = positive(key, value)?,
            "lambda1" => self.lambda1 = non_negative(key, value)?,
            "margin" => self.margin = non_negative(key, value)?,
            "learning_rate" => {
                let lr = non_negative(key, value)?;
                if lr == 0.0 {
                    return Err(MgamError::config(key, "must be positive"));
                }
                self.learning_rate = lr;
            }
            "batch_size" => self.batch_size = positive(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "train_negatives" => self.train_negatives = positive(key, value)?,
            "eval_negatives" => self.eval_negatives = positive(key, value)?,
            "ks" => self.ks = parse_usize_list(key, value)?,
            "kmeans_max_iters" => self.kmeans_max_iters = positive(key, value)?,
            "kmeans_restarts" => self.kmeans_restarts = positive(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "graph.weighted" => self.graph_weighted = parse(key, value)?,
            "ablate" => {
                let mods: Vec<String> = csv_list(value).map(str::to_string).collect();
                let mut a = Ablation::FULL;
                for m in &mods {
                    a.disable(m).map_err(|e| MgamError::config(key, e.to_string()))?;
                }
                self.ablate = mods;
            }
            other => return Err(MgamError::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MgamError::config(line, "expected `key = value`"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Defaults, then `path`, then each `key=value` override.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let mut cfg = Config::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| MgamError::LoadFile {
                path: p.to_path_buf(),
                msg: e.to_string(),
            })?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| MgamError::config(o.as_str(), "expected `key=value`"))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    /// Every key with its resolved value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[usize]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "embedding_dim = {}", self.embedding_dim);
        let _ = writeln!(s, "num_subsets = {}", self.num_subsets);
        let _ = writeln!(s, "gcn_layers = {}", self.gcn_layers);
        let _ = writeln!(s, "lambda1 = {}", self.lambda1);
        let _ = writeln!(s, "margin = {}", self.margin);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "train_negatives = {}", self.train_negatives);
        let _ = writeln!(s, "eval_negatives = {}", self.eval_negatives);
        let _ = writeln!(s, "ks = \"{}\"", list(&self.ks));
        let _ = writeln!(s, "kmeans_max_iters = {}", self.kmeans_max_iters);
        let _ = writeln!(s, "kmeans_restarts = {}", self.kmeans_restarts);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "graph.weighted = {}", self.graph_weighted);
        let _ = writeln!(s, "ablate = \"{}\"", self.ablate.join(","));
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.embedding_dim, self.num_subsets, self.gcn_layers, self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda1: self.lambda1,
            margin: self.margin,
            lr: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            train_negatives: self.train_negatives,
            seed: self.seed,
        }
    }

    pub fn ablation(&self) -> Result<Ablation> {
        let mut a = Ablation::FULL;
        for m in &self.ablate {
            a.disable(m)?;
        }
        a.validate()?;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_input() {
        assert_eq!(Config::resolve(None, &[]).unwrap(), Config::default());
    }

    #[test]
    fn overrides_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "# run\nnum_subsets = 5\nks = \"5,10,20\"  # three\n").unwrap();
        let cfg = Config::resolve(Some(&p), &["num_subsets=3".into()]).unwrap();
        assert_eq!(cfg.num_subsets, 3);
        assert_eq!(cfg.ks, vec![5, 10, 20]);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::resolve(None, &["lr=0.1".into()]).unwrap_err();
        assert!(matches!(&err, MgamError::Config { key, .. } if key == "lr"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_values_are_rejected() {
        for o in ["epochs=x", "embedding_dim=0", "embedding_dim=7", "learning_rate=0", "margin=-1", "ablate=foo", "ks=0"] {
            assert!(Config::resolve(None, &[o.to_string()]).is_err(), "{o}");
        }
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = Config::default();
        cfg.set("ablate", "gpe,suppe").unwrap();
        cfg.set("graph.weighted", "true").unwrap();
        let mut back = Config::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.to_text().lines().count(), KEYS.len());
    }
}
