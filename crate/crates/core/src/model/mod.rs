//! The multi-granularity attention model: parameters and forward pass.

mod forward;

use serde::{Deserialize, Serialize};

pub use forward::{
    attention_pool, forward_batch, fuse, predict_logit, propagate, score_batch, subset_attention, BatchGraphMode,
    Context, ForwardOutput, GroupForwardState,
};

use crate::autodiff::ParamStore;
use crate::error::{MgamError, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Maximum number of subsets per group.
    pub num_subsets: usize,
    /// Propagation layers on the group graphs.
    pub layers: usize,
    pub seed: u64,
    /// Half-width of the uniform initialisation; `1/sqrt(dim)` when `None`.
    pub init_scale: Option<f64>,
}

impl ModelConfig {
    pub fn new(dim: usize, num_subsets: usize, layers: usize, seed: u64) -> Self {
        ModelConfig {
            dim,
            num_subsets,
            layers,
            seed,
            init_scale: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_multiple_of(2) {
            return Err(MgamError::usage("embedding dimension must be even and at least 2"));
        }
        if self.num_subsets == 0 {
            return Err(MgamError::usage("number of subsets must be at least 1"));
        }
        if self.layers == 0 {
            return Err(MgamError::usage("propagation layers must be at least 1"));
        }
        Ok(())
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale.unwrap_or(1.0 / (self.dim as f64).sqrt())
    }
}

/// Which granularity branches take part in fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub use_subpe: bool,
    pub use_gpe: bool,
    pub use_suppe: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation::FULL
    }
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        use_subpe: true,
        use_gpe: true,
        use_suppe: true,
    };

    pub fn without(module: &str) -> Result<Ablation> {
        let mut a = Ablation::FULL;
        a.disable(module)?;
        Ok(a)
    }

    pub fn disable(&mut self, module: &str) -> Result<()> {
        match module.trim().to_ascii_lowercase().as_str() {
            "subpe" => self.use_subpe = false,
            "gpe" => self.use_gpe = false,
            "suppe" => self.use_suppe = false,
            other => {
                return Err(MgamError::usage(format!(
                    "unknown module `{other}` (expected subpe, gpe or suppe)"
                )))
            }
        }
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        [self.use_subpe, self.use_gpe, self.use_suppe].iter().filter(|&&b| b).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.active_count() == 0 {
            return Err(MgamError::usage("all granularities ablated: fusion stack would be empty"));
        }
        Ok(())
    }

    /// Short label such as `full` or `wo-subpe`.
    pub fn label(&self) -> String {
        let off: Vec<&str> = [
            (self.use_subpe, "subpe"),
            (self.use_gpe, "gpe"),
            (self.use_suppe, "suppe"),
        ]
        .iter()
        .filter(|(on, _)| !on)
        .map(|(_, n)| *n)
        .collect();
        if off.is_empty() {
            "full".to_string()
        } else {
            format!("wo-{}", off.join("-"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotIds {
    pub w: usize,
    /// Absent when there is only one slot.
    pub w_bar: Option<usize>,
    pub b: usize,
}

/// Indices of every named tensor inside the model's [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIds {
    pub user_emb: usize,
    pub item_emb: usize,
    pub group_emb: usize,
    pub user_att_w: usize,
    pub user_att_b: usize,
    pub slots: Vec<SlotIds>,
    pub subset_score_w: usize,
    pub subset_score_b: usize,
    pub group_att_w: usize,
    pub group_att_b: usize,
    pub global_layers: Vec<usize>,
    pub batch_layers: Vec<usize>,
    pub proj_w: usize,
    pub proj_b: usize,
    pub pred_w: usize,
    pub pred_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub n_users: usize,
    pub n_items: usize,
    pub n_groups: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Uniform,
    Zero,
}

/// Names, shapes and initialisers of all parameters, in storage order.
fn layout(cfg: &ModelConfig, sizes: Sizes) -> Vec<(String, [usize; 2], Init)> {
    let d = cfg.dim;
    let m = cfg.num_subsets;
    let mut out = vec![
        ("user_emb".to_string(), [sizes.n_users, d], Init::Uniform),
        ("item_emb".to_string(), [sizes.n_items, d], Init::Uniform),
        ("group_emb".to_string(), [sizes.n_groups, d], Init::Uniform),
        ("subpe.user_att.w".to_string(), [1, 1], Init::Uniform),
        ("subpe.user_att.b".to_string(), [1, 1], Init::Zero),
    ];
    for i in 0..m {
        out.push((format!("subpe.slot{i}.w"), [d, d], Init::Uniform));
        if m > 1 {
            out.push((format!("subpe.slot{i}.w_bar"), [d, (m - 1) * d], Init::Uniform));
        }
        out.push((format!("subpe.slot{i}.b"), [1, d], Init::Zero));
    }
    out.push(("subpe.score.w".to_string(), [1, d], Init::Uniform));
    out.push(("subpe.score.b".to_string(), [1, 1], Init::Zero));
    out.push(("gpe.att.w".to_string(), [1, 1], Init::Uniform));
    out.push(("gpe.att.b".to_string(), [1, 1], Init::Zero));
    for k in 0..cfg.layers {
        out.push((format!("suppe.global{k}.w"), [d, d], Init::Uniform));
    }
    for k in 0..cfg.layers {
        out.push((format!("suppe.batch{k}.w"), [d, d], Init::Uniform));
    }
    out.push(("suppe.proj.w".to_string(), [d, 2 * d], Init::Uniform));
    out.push(("suppe.proj.b".to_string(), [1, d], Init::Zero));
    out.push(("predict.w".to_string(), [1, 3 * d], Init::Uniform));
    out.push(("predict.b".to_string(), [1, 1], Init::Zero));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub sizes: Sizes,
    pub params: ParamStore,
    pub ids: ParamIds,
}

impl Model {
    /// Fresh parameters: weights and embeddings uniform in `±init_scale`,
    /// biases zero.
    pub fn init(config: ModelConfig, sizes: Sizes) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(config.seed, Stream::Init);
        let scale = config.init_scale();
        let mut params = ParamStore::new();
        for (name, [r, c], init) in layout(&config, sizes) {
            let t = match init {
                Init::Uniform => Tensor::uniform(r, c, scale, &mut rng),
                Init::Zero => Tensor::zeros(r, c),
            };
            params.push(name, t);
        }
        Self::from_store(config, sizes, params)
    }

    /// Wraps an existing store, checking every name and shape.
    pub fn from_store(config: ModelConfig, sizes: Sizes, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config, sizes);
        if expected.len() != params.len() {
            return Err(MgamError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (id, (name, shape, _)) in expected.iter().enumerate() {
            if params.name(id) != name {
                return Err(MgamError::Checkpoint(format!(
                    "tensor {id} is `{}`, expected `{name}`",
                    params.name(id)
                )));
            }
            if params.get(id).shape() != *shape {
                return Err(MgamError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, config requires {:?}",
                    params.get(id).shape(),
                    shape
                )));
            }
            if !params.get(id).is_finite() {
                return Err(MgamError::Checkpoint(format!("tensor `{name}` holds non-finite values")));
            }
        }
        let id = |n: &str| params.id_of(n).expect("validated layout");
        let m = config.num_subsets;
        let ids = ParamIds {
            user_emb: id("user_emb"),
            item_emb: id("item_emb"),
            group_emb: id("group_emb"),
            user_att_w: id("subpe.user_att.w"),
            user_att_b: id("subpe.user_att.b"),
            slots: (0..m)
                .map(|i| SlotIds {
                    w: id(&format!("subpe.slot{i}.w")),
                    w_bar: (m > 1).then(|| id(&format!("subpe.slot{i}.w_bar"))),
                    b: id(&format!("subpe.slot{i}.b")),
                })
                .collect(),
            subset_score_w: id("subpe.score.w"),
            subset_score_b: id("subpe.score.b"),
            group_att_w: id("gpe.att.w"),
            group_att_b: id("gpe.att.b"),
            global_layers: (0..config.layers).map(|k| id(&format!("suppe.global{k}.w"))).collect(),
            batch_layers: (0..config.layers).map(|k| id(&format!("suppe.batch{k}.w"))).collect(),
            proj_w: id("suppe.proj.w"),
            proj_b: id("suppe.proj.b"),
            pred_w: id("predict.w"),
            pred_b: id("predict.b"),
        };
        Ok(Model {
            config,
            sizes,
            params,
            ids,
        })
    }

    /// Expected `(name, shape)` pairs for a configuration.
    pub fn expected_shapes(config: &ModelConfig, sizes: Sizes) -> Vec<(String, [usize; 2])> {
        layout(config, sizes).into_iter().map(|(n, s, _)| (n, s)).collect()
    }

    pub fn set(&mut self, id: usize, value: Tensor) {
        assert_eq!(self.params.get(id).shape(), value.shape());
        *self.params.get_mut(id) = value;
    }
}
