//! Hybrid GCN/GAT volume regressor.
//!
//! Forward pass: input projection, residual GCN stack, edge encoder,
//! edge-aware GAT, TopK pooling, a second GCN/GAT block on the pooled graph,
//! mean/max readout. Each node is scored by a two-layer head over
//! `[gat_embedding_i || readout]`, so every segment gets its own prediction
//! while the pooled branch contributes graph-wide context.

mod forward;
pub mod layers;
mod train;


use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::math;
use crate::rng::{seeded, Stream};
use crate::tensor::{Tensor, TensorError};

pub use forward::{attention_weights, embed, embed_in, pooled_nodes, predict, predict_and_embed, predict_in, GraphContext};
pub use train::{evaluate_mse, mse_gradients, train, train_in, warm_finetune, warm_finetune_in, EpochStats, TrainReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid model config: {0}")]
    InvalidConfig(&'static str),
    #[error("graph widths (d={graph_d}, d_e={graph_de}) do not match the model (d={model_d}, d_e={model_de})")]
    WidthMismatch { graph_d: usize, graph_de: usize, model_d: usize, model_de: usize },
    #[error("the training set is empty")]
    EmptyTrainSet,
    #[error("training loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("pooling produced an empty graph")]
    EmptyPooledGraph,
    #[error("node {0} is not in the graph")]
    UnknownNode(usize),
}

/// Which message-passing blocks are active. The single-mechanism variants
/// exist for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[default]
    Hybrid,
    GcnOnly,
    GatOnly,
}

impl Architecture {
    pub fn uses_gcn(self) -> bool {
        !matches!(self, Architecture::GatOnly)
    }

    pub fn uses_gat(self) -> bool {
        !matches!(self, Architecture::GcnOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    pub gat_heads: usize,
    pub topk_ratio: f64,
    pub head_hidden: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub architecture: Architecture,
    /// Fit an output affine map (train-label mean and std) before training.
    pub scale_targets: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            gcn_layers: 2,
            gat_heads: 4,
            topk_ratio: 0.5,
            head_hidden: 64,
            learning_rate: 1e-3,
            max_epochs: 300,
            patience: 30,
            architecture: Architecture::Hybrid,
            scale_targets: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dim == 0 || self.gat_heads == 0 || self.head_hidden == 0 {
            return Err(ModelError::InvalidConfig("dimensions must be at least 1"));
        }
        if self.hidden_dim % self.gat_heads != 0 {
            return Err(ModelError::InvalidConfig("hidden_dim must be divisible by gat_heads"));
        }
        if !(self.topk_ratio > 0.0 && self.topk_ratio <= 1.0) {
            return Err(ModelError::InvalidConfig("topk_ratio must lie in (0, 1]"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig("learning_rate must be positive"));
        }
        if self.architecture == Architecture::GcnOnly && self.gcn_layers == 0 {
            return Err(ModelError::InvalidConfig("a GCN-only model needs at least one GCN layer"));
        }
        Ok(())
    }
}

/// Everything that fixes the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub feature_dim: usize,
    pub edge_dim: usize,
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    pub gat_heads: usize,
    pub head_hidden: usize,
    pub topk_ratio: f64,
    pub architecture: Architecture,
}

impl ModelShape {
    pub fn new(config: &ModelConfig, feature_dim: usize, edge_dim: usize) -> Self {
        Self {
            feature_dim,
            edge_dim,
            hidden_dim: config.hidden_dim,
            gcn_layers: config.gcn_layers,
            gat_heads: config.gat_heads,
            head_hidden: config.head_hidden,
            topk_ratio: config.topk_ratio,
            architecture: config.architecture,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.gat_heads
    }
}

/// Output affine map `y = mean + std * raw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 1.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = math::sqrt(var);
        Self { mean, std: if std > 1e-8 { std } else { 1.0 } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LinearIx {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NormIx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct GcnIx {
    pub lin: LinearIx,
    pub norm: NormIx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct GatHeadIx {
    pub w: usize,
    pub a_src: usize,
    pub a_dst: usize,
    pub a_edge: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct GatIx {
    pub heads: Vec<GatHeadIx>,
    pub self_loop_edge: usize,
    pub norm: NormIx,
}

/// Positions of each learnable tensor in [`HybridModelParams::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub input: LinearIx,
    pub gcn: Vec<GcnIx>,
    pub edge_encoder: Option<LinearIx>,
    pub gat: Option<GatIx>,
    pub pool_score: usize,
    pub pooled_gcn: Option<GcnIx>,
    pub pooled_gat: Option<GatIx>,
    pub head_hidden: LinearIx,
    pub head_out: LinearIx,
}

enum Init {
    Glorot,
    Zeros,
    Ones,
}

struct Builder<'r, R: Rng> {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    rng: &'r mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let t = match init {
            Init::Zeros => Tensor::zeros(rows, cols),
            Init::Ones => Tensor::full(rows, cols, 1.0),
            Init::Glorot => {
                let a = math::sqrt(6.0 / (rows + cols).max(1) as f64);
                let data = (0..rows * cols).map(|_| self.rng.random_range(-a..a)).collect();
                Tensor::matrix(rows, cols, data).expect("sized above")
            }
        };
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> LinearIx {
        LinearIx {
            w: self.add(alloc::format!("{name}.weight"), fan_in, fan_out, Init::Glorot),
            b: self.add(alloc::format!("{name}.bias"), 1, fan_out, Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, width: usize) -> NormIx {
        NormIx {
            gain: self.add(alloc::format!("{name}.gain"), 1, width, Init::Ones),
            bias: self.add(alloc::format!("{name}.bias"), 1, width, Init::Zeros),
        }
    }

    fn gcn(&mut self, name: &str, h: usize) -> GcnIx {
        GcnIx { lin: self.linear(name, h, h), norm: self.norm(&alloc::format!("{name}.norm"), h) }
    }

    fn gat(&mut self, name: &str, shape: &ModelShape) -> GatIx {
        let h = shape.hidden_dim;
        let f = shape.head_dim();
        let heads = (0..shape.gat_heads)
            .map(|k| GatHeadIx {
                w: self.add(alloc::format!("{name}.head{k}.weight"), h, f, Init::Glorot),
                a_src: self.add(alloc::format!("{name}.head{k}.attn_src"), f, 1, Init::Glorot),
                a_dst: self.add(alloc::format!("{name}.head{k}.attn_dst"), f, 1, Init::Glorot),
                a_edge: self.add(alloc::format!("{name}.head{k}.attn_edge"), h, 1, Init::Glorot),
            })
            .collect();
        GatIx {
            heads,
            self_loop_edge: self.add(alloc::format!("{name}.self_loop_edge"), 1, h, Init::Zeros),
            norm: self.norm(&alloc::format!("{name}.norm"), h),
        }
    }
}

/// All learnable tensors of the hybrid model plus the fitted output scale.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModelParams {
    shape: ModelShape,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    pub(crate) layout: Layout,
    pub target: Option<TargetScale>,
}

impl HybridModelParams {
    /// Glorot-uniform weights, zero biases, unit norm gains.
    pub fn init(config: &ModelConfig, feature_dim: usize, edge_dim: usize) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seeded(config.seed, Stream::ModelInit);
        Ok(Self::build(ModelShape::new(config, feature_dim, edge_dim), &mut rng))
    }

    fn build<R: Rng>(shape: ModelShape, rng: &mut R) -> Self {
        let h = shape.hidden_dim;
        let arch = shape.architecture;
        let mut b = Builder { names: Vec::new(), tensors: Vec::new(), rng };
        let input = b.linear("input", shape.feature_dim, h);
        let gcn = if arch.uses_gcn() {
            (0..shape.gcn_layers).map(|l| b.gcn(&alloc::format!("gcn{l}"), h)).collect()
        } else {
            Vec::new()
        };
        let (edge_encoder, gat) = if arch.uses_gat() {
            (Some(b.linear("edge_encoder", shape.edge_dim, h)), Some(b.gat("gat", &shape)))
        } else {
            (None, None)
        };
        let pool_score = b.add("pool.score".into(), h, 1, Init::Glorot);
        let pooled_gcn = arch.uses_gcn().then(|| b.gcn("pooled_gcn", h));
        let pooled_gat = arch.uses_gat().then(|| b.gat("pooled_gat", &shape));
        let head_hidden = b.linear("head.hidden", 3 * h, shape.head_hidden);
        let head_out = b.linear("head.out", shape.head_hidden, 1);
        let layout = Layout { input, gcn, edge_encoder, gat, pool_score, pooled_gcn, pooled_gat, head_hidden, head_out };
        let Builder { names, tensors, .. } = b;
        Self { shape, names, tensors, layout, target: None }
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Sets every learnable entry to zero.
    pub fn zeroed(mut self) -> Self {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        self
    }

    pub fn to_checkpoint(&self) -> Checkpoint<ModelMeta> {
        Checkpoint::new("hybrid_gnn", ModelMeta { shape: self.shape.clone(), target: self.target }, self.named())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint<ModelMeta>) -> Result<Self, ModelError> {
        ckpt.check_header("hybrid_gnn")?;
        let shape = ckpt.meta.shape.clone();
        if shape.gat_heads == 0 || shape.hidden_dim % shape.gat_heads != 0 {
            return Err(CheckpointError::Meta("hidden_dim must be divisible by gat_heads".into()).into());
        }
        let mut params = Self::build(shape, &mut seeded(0, Stream::ModelInit));
        for i in 0..params.tensors.len() {
            ckpt.fill(&params.names[i], &mut params.tensors[i])?;
        }
        params.target = ckpt.meta.target;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub shape: ModelShape,
    pub target: Option<TargetScale>,
}
