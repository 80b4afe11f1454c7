use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{NetworkGraph, SparseMatrix};
use crate::tensor::{Tape, Tensor, Var};

use super::layers::{self, GatHeadVars, GatVars, GcnVars, GraphStructure, Messages};
use super::{GatIx, GcnIx, HybridModelParams, ModelError, ModelShape};

/// Graph-side inputs that do not change during training, precomputed once.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub structure: GraphStructure,
    adjacency: SparseMatrix,
    messages: Messages,
    features: Tensor,
    edge_attrs: Tensor,
    volumes: Vec<f64>,
}

impl GraphContext {
    pub fn new(graph: &NetworkGraph) -> Self {
        let structure = GraphStructure { n: graph.node_count(), edges: graph.edge_pairs() };
        Self {
            adjacency: structure.adjacency(),
            messages: structure.messages(),
            structure,
            features: graph.feature_matrix(),
            edge_attrs: graph.edge_attr_matrix(),
            volumes: graph.volumes(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.structure.n
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn messages(&self) -> &Messages {
        &self.messages
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_attrs.cols()
    }

    pub(crate) fn check(&self, shape: &ModelShape) -> Result<(), ModelError> {
        if self.feature_dim() != shape.feature_dim || self.edge_dim() != shape.edge_dim {
            return Err(ModelError::WidthMismatch {
                graph_d: self.feature_dim(),
                graph_de: self.edge_dim(),
                model_d: shape.feature_dim,
                model_de: shape.edge_dim,
            });
        }
        if self.structure.n == 0 {
            return Err(ModelError::EmptyPooledGraph);
        }
        Ok(())
    }
}

/// Tape handles produced by one forward pass.
pub(crate) struct Forward {
    /// `N x 1` predicted volumes, on the target scale.
    pub prediction: Var,
    /// `N x h` node embeddings before pooling.
    pub embedding: Var,
    /// One tape leaf per learnable tensor, aligned with the parameter list.
    pub params: Vec<Var>,
    /// First attention block, one column per head.
    pub attention: Vec<Var>,
    pub kept: Vec<usize>,
}

fn gcn_vars(p: &[Var], ix: &GcnIx) -> GcnVars {
    GcnVars { weight: p[ix.lin.w], bias: p[ix.lin.b], gain: p[ix.norm.gain], beta: p[ix.norm.bias] }
}

fn gat_vars(p: &[Var], ix: &GatIx) -> GatVars {
    GatVars {
        heads: ix
            .heads
            .iter()
            .map(|h| GatHeadVars { weight: p[h.w], attn_src: p[h.a_src], attn_dst: p[h.a_dst], attn_edge: p[h.a_edge] })
            .collect(),
        self_loop_edge: p[ix.self_loop_edge],
        gain: p[ix.norm.gain],
        beta: p[ix.norm.bias],
    }
}

pub(crate) fn forward(tape: &mut Tape, params: &HybridModelParams, ctx: &GraphContext) -> Result<Forward, ModelError> {
    ctx.check(params.shape())?;
    let p: Vec<Var> = params.tensors().iter().map(|t| tape.leaf(t.clone().with_grad(true))).collect();
    let layout = &params.layout;
    let n = ctx.node_count();

    let x = tape.constant(ctx.features.clone());
    let h = tape.matmul(x, p[layout.input.w])?;
    let h = tape.add_row(h, p[layout.input.b])?;
    let mut h = tape.relu(h);

    for ix in &layout.gcn {
        h = layers::gcn_layer(tape, h, &ctx.adjacency, &gcn_vars(&p, ix))?;
    }

    let mut attention = Vec::new();
    let mut e_prime = None;
    if let (Some(enc), Some(gat)) = (&layout.edge_encoder, &layout.gat) {
        let e_raw = tape.constant(ctx.edge_attrs.clone());
        let e = layers::encode_edges(tape, e_raw, p[enc.w], p[enc.b])?;
        let out = layers::gat_layer(tape, h, &ctx.messages, e, &gat_vars(&p, gat))?;
        h = out.output;
        attention = out.attention;
        e_prime = Some(e);
    }
    let embedding = h;

    let pooled = layers::topk_pool(tape, h, &ctx.structure, e_prime, params.shape().topk_ratio, p[layout.pool_score])?;
    let mut g = pooled.h;
    if let Some(ix) = &layout.pooled_gcn {
        g = layers::gcn_layer(tape, g, &pooled.structure.adjacency(), &gcn_vars(&p, ix))?;
    }
    if let (Some(ix), Some(e)) = (&layout.pooled_gat, pooled.e_prime) {
        g = layers::gat_layer(tape, g, &pooled.structure.messages(), e, &gat_vars(&p, ix))?.output;
    }
    let readout = layers::global_readout(tape, g)?;

    let broadcast = tape.gather_rows(readout, &vec![0; n])?;
    let z = tape.concat(&[embedding, broadcast], 1)?;
    let z = tape.matmul(z, p[layout.head_hidden.w])?;
    let z = tape.add_row(z, p[layout.head_hidden.b])?;
    let z = tape.relu(z);
    let z = tape.matmul(z, p[layout.head_out.w])?;
    let mut prediction = tape.add_row(z, p[layout.head_out.b])?;
    if let Some(scale) = params.target {
        let scaled = tape.mul_scalar(prediction, scale.std);
        let mean = tape.constant(Tensor::full(1, 1, scale.mean));
        prediction = tape.add_row(scaled, mean)?;
    }

    Ok(Forward { prediction, embedding, params: p, attention, kept: pooled.kept })
}

/// Predicted volume for every node.
pub fn predict(params: &HybridModelParams, graph: &NetworkGraph) -> Result<Vec<f64>, ModelError> {
    predict_in(params, &GraphContext::new(graph))
}

pub fn predict_in(params: &HybridModelParams, ctx: &GraphContext) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let f = forward(&mut tape, params, ctx)?;
    Ok(tape.value(f.prediction).data().to_vec())
}

/// Node embeddings (`N x hidden_dim`) taken before pooling.
pub fn embed(params: &HybridModelParams, graph: &NetworkGraph) -> Result<Tensor, ModelError> {
    embed_in(params, &GraphContext::new(graph))
}

pub fn embed_in(params: &HybridModelParams, ctx: &GraphContext) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let f = forward(&mut tape, params, ctx)?;
    Ok(tape.value(f.embedding).clone())
}

/// Predictions and pre-pooling embeddings from a single pass.
pub fn predict_and_embed(params: &HybridModelParams, ctx: &GraphContext) -> Result<(Vec<f64>, Tensor), ModelError> {
    let mut tape = Tape::new();
    let f = forward(&mut tape, params, ctx)?;
    Ok((tape.value(f.prediction).data().to_vec(), tape.value(f.embedding).clone()))
}

/// Attention weights of the first GAT block, per head, aligned with the
/// message list (both directions of each edge, then self-loops).
pub fn attention_weights(params: &HybridModelParams, ctx: &GraphContext) -> Result<Vec<Vec<f64>>, ModelError> {
    let mut tape = Tape::new();
    let f = forward(&mut tape, params, ctx)?;
    Ok(f.attention.iter().map(|a| tape.value(*a).data().to_vec()).collect())
}

/// Node ids kept by the pooling step, best score first.
pub fn pooled_nodes(params: &HybridModelParams, ctx: &GraphContext) -> Result<Vec<usize>, ModelError> {
    let mut tape = Tape::new();
    Ok(forward(&mut tape, params, ctx)?.kept)
}
