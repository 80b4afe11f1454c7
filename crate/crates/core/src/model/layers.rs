//! Message-passing layers, written against the [`Tape`] primitives.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::SparseMatrix;
use crate::math;
use crate::tensor::{Tape, Tensor, TensorError, Var};

use super::ModelError;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const ATTENTION_SLOPE: f64 = 0.2;

/// Node count plus undirected edge list; the topology a layer runs on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStructure {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Directed attention messages: both directions of every edge, then one
/// self-loop per node. `edge_row[i]` indexes the edge embedding table whose
/// last row is the learned self-loop embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Messages {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub edge_row: Vec<usize>,
}

impl GraphStructure {
    pub fn adjacency(&self) -> SparseMatrix {
        SparseMatrix::gcn_normalized(self.n, &self.edges)
    }

    pub fn messages(&self) -> Messages {
        let m = 2 * self.edges.len() + self.n;
        let mut msgs = Messages { src: Vec::with_capacity(m), dst: Vec::with_capacity(m), edge_row: Vec::with_capacity(m) };
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            msgs.src.extend([u, v]);
            msgs.dst.extend([v, u]);
            msgs.edge_row.extend([e, e]);
        }
        for i in 0..self.n {
            msgs.src.push(i);
            msgs.dst.push(i);
            msgs.edge_row.push(self.edges.len());
        }
        msgs
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GcnVars {
    pub weight: Var,
    pub bias: Var,
    pub gain: Var,
    pub beta: Var,
}

/// `Â·H` through gather / scale / scatter.
pub fn propagate(tape: &mut Tape, h: Var, adj: &SparseMatrix) -> Result<Var, TensorError> {
    let weights = tape.constant(Tensor::column(adj.values.clone()));
    let gathered = tape.gather_rows(h, &adj.cols)?;
    let scaled = tape.scale_rows(gathered, weights)?;
    tape.scatter_add_rows(scaled, &adj.rows, adj.n)
}

fn affine_norm(tape: &mut Tape, x: Var, gain: Var, beta: Var) -> Result<Var, TensorError> {
    let normed = tape.layer_norm(x, LAYER_NORM_EPS);
    let scaled = tape.mul_row(normed, gain)?;
    tape.add_row(scaled, beta)
}

/// `ReLU(LayerNorm(Â·H·W + b)) + H`.
pub fn gcn_layer(tape: &mut Tape, h: Var, adj: &SparseMatrix, p: &GcnVars) -> Result<Var, TensorError> {
    let agg = propagate(tape, h, adj)?;
    let z = tape.matmul(agg, p.weight)?;
    let z = tape.add_row(z, p.bias)?;
    let z = affine_norm(tape, z, p.gain, p.beta)?;
    let z = tape.relu(z);
    tape.add(z, h)
}

/// Row-wise `ReLU(E·W + b)`.
pub fn encode_edges(tape: &mut Tape, e_raw: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
    let z = tape.matmul(e_raw, weight)?;
    let z = tape.add_row(z, bias)?;
    Ok(tape.relu(z))
}

#[derive(Debug, Clone, Copy)]
pub struct GatHeadVars {
    pub weight: Var,
    pub attn_src: Var,
    pub attn_dst: Var,
    pub attn_edge: Var,
}

#[derive(Debug, Clone)]
pub struct GatVars {
    pub heads: Vec<GatHeadVars>,
    pub self_loop_edge: Var,
    pub gain: Var,
    pub beta: Var,
}

#[derive(Debug, Clone)]
pub struct GatOutput {
    pub output: Var,
    /// Per head, one weight per message (column vector aligned with
    /// [`Messages`]).
    pub attention: Vec<Var>,
}

/// Edge-aware multi-head attention followed by `ReLU(LayerNorm(.))`.
///
/// Per head, `score(u->v) = LeakyReLU(a_s·Wh_u + a_t·Wh_v + a_e·e_uv)`,
/// normalized by softmax over the messages arriving at `v`; head outputs
/// `Σ α·Wh_u` are concatenated.
pub fn gat_layer(
    tape: &mut Tape,
    h: Var,
    msgs: &Messages,
    e_prime: Var,
    p: &GatVars,
) -> Result<GatOutput, TensorError> {
    let n = tape.value(h).rows();
    let edge_table = tape.concat(&[e_prime, p.self_loop_edge], 0)?;
    let mut outputs = Vec::with_capacity(p.heads.len());
    let mut attention = Vec::with_capacity(p.heads.len());
    for head in &p.heads {
        let wh = tape.matmul(h, head.weight)?;
        let s_src = tape.matmul(wh, head.attn_src)?;
        let s_dst = tape.matmul(wh, head.attn_dst)?;
        let s_edge = tape.matmul(edge_table, head.attn_edge)?;
        let a = tape.gather_rows(s_src, &msgs.src)?;
        let b = tape.gather_rows(s_dst, &msgs.dst)?;
        let c = tape.gather_rows(s_edge, &msgs.edge_row)?;
        let score = tape.add(a, b)?;
        let score = tape.add(score, c)?;
        let score = tape.leaky_relu(score, ATTENTION_SLOPE);
        let alpha = tape.segment_softmax(score, &msgs.dst)?;
        let values = tape.gather_rows(wh, &msgs.src)?;
        let weighted = tape.scale_rows(values, alpha)?;
        outputs.push(tape.scatter_add_rows(weighted, &msgs.dst, n)?);
        attention.push(alpha);
    }
    let joined = tape.concat(&outputs, 1)?;
    let normed = affine_norm(tape, joined, p.gain, p.beta)?;
    Ok(GatOutput { output: tape.relu(normed), attention })
}

#[derive(Debug, Clone)]
pub struct Pooled {
    /// Gated features of the kept nodes, in kept order.
    pub h: Var,
    /// Original ids of kept nodes, best score first.
    pub kept: Vec<usize>,
    /// Induced subgraph over kept nodes, relabeled `0..k`.
    pub structure: GraphStructure,
    /// Original edge indices surviving in the induced subgraph.
    pub kept_edges: Vec<usize>,
    pub e_prime: Option<Var>,
}

/// Keeps the `ceil(ratio·N)` nodes with the highest `H·p/‖p‖` (ties to the
/// lower id) and gates their features by `sigmoid(score)`.
pub fn topk_pool(
    tape: &mut Tape,
    h: Var,
    structure: &GraphStructure,
    e_prime: Option<Var>,
    ratio: f64,
    score_vec: Var,
) -> Result<Pooled, ModelError> {
    let n = structure.n;
    if n == 0 {
        return Err(ModelError::EmptyPooledGraph);
    }
    let p_hat = tape.l2_normalize(score_vec);
    let scores = tape.matmul(h, p_hat)?;
    let k = (math::ceil(ratio * n as f64) as usize).clamp(1, n);
    let kept = top_k_indices(tape.value(scores).data(), k);

    let mut position = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        position[old] = new;
    }
    let mut edges = Vec::new();
    let mut kept_edges = Vec::new();
    for (e, &(u, v)) in structure.edges.iter().enumerate() {
        if position[u] != usize::MAX && position[v] != usize::MAX {
            edges.push((position[u], position[v]));
            kept_edges.push(e);
        }
    }

    let h_kept = tape.gather_rows(h, &kept)?;
    let s_kept = tape.gather_rows(scores, &kept)?;
    let gate = tape.sigmoid(s_kept);
    let gated = tape.scale_rows(h_kept, gate)?;
    let e_pooled = match e_prime {
        Some(e) => Some(tape.gather_rows(e, &kept_edges)?),
        None => None,
    };
    Ok(Pooled { h: gated, kept, structure: GraphStructure { n: k, edges }, kept_edges, e_prime: e_pooled })
}

/// Indices of the `k` largest values, descending; ties go to the lower index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// `[mean over rows || max over rows]`, a `1 x 2h` row.
pub fn global_readout(tape: &mut Tape, h: Var) -> Result<Var, ModelError> {
    if tape.value(h).rows() == 0 {
        return Err(ModelError::EmptyPooledGraph);
    }
    let mean = tape.mean_rows(h)?;
    let max = tape.max_rows(h)?;
    Ok(tape.concat(&[mean, max], 1)?)
}
