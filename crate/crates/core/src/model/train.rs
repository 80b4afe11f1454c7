use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::NetworkGraph;
use crate::optim::{Adam, AdamConfig};
use crate::partition::SplitAssignment;
use crate::tensor::{Tape, Tensor, Var};

use super::forward::{forward, predict_in, GraphContext};
use super::{HybridModelParams, ModelConfig, ModelError, TargetScale};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Optimizer steps taken.
    pub epochs_run: usize,
    /// Number of steps behind the restored parameters.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub initial_val_mse: f64,
    pub train_curve: Vec<EpochStats>,
    /// Left at zero here; callers with a clock fill it in.
    pub wall_seconds: f64,
}

fn check_nodes(ctx: &GraphContext, nodes: &[usize]) -> Result<(), ModelError> {
    match nodes.iter().find(|&&i| i >= ctx.node_count()) {
        Some(&bad) => Err(ModelError::UnknownNode(bad)),
        None => Ok(()),
    }
}

fn mse_of(pred: &[f64], truth: &[f64], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    nodes.iter().map(|&i| (pred[i] - truth[i]) * (pred[i] - truth[i])).sum::<f64>() / nodes.len() as f64
}

/// One forward/backward pass. Returns the predictions made by the current
/// parameters and the gradient of the train MSE.
pub(super) fn loss_and_grads(
    params: &HybridModelParams,
    ctx: &GraphContext,
    train_nodes: &[usize],
    epoch: usize,
) -> Result<(Vec<f64>, Vec<Tensor>), ModelError> {
    let mut tape = Tape::new();
    let f = forward(&mut tape, params, ctx)?;
    let pred = tape.value(f.prediction).data().to_vec();
    let chosen = tape.gather_rows(f.prediction, train_nodes)?;
    let neg_truth: Vec<f64> = train_nodes.iter().map(|&i| -ctx.volumes()[i]).collect();
    let neg_truth = tape.constant(Tensor::column(neg_truth));
    let diff = tape.add(chosen, neg_truth)?;
    let sq = tape.square(diff);
    let loss = tape.mean(sq)?;
    if !tape.value(loss).all_finite() {
        return Err(ModelError::NonFiniteLoss(epoch));
    }
    let param_vars: Vec<Var> = f.params;
    let grads = tape.backward(loss)?;
    Ok((pred, param_vars.iter().map(|&v| grads.wrt(v)).collect()))
}

/// Train-node MSE and its gradient for every learnable tensor, in
/// [`HybridModelParams::tensors`] order.
pub fn mse_gradients(
    params: &HybridModelParams,
    ctx: &GraphContext,
    train_nodes: &[usize],
) -> Result<(f64, Vec<Tensor>), ModelError> {
    ctx.check(params.shape())?;
    if train_nodes.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    check_nodes(ctx, train_nodes)?;
    let (pred, grads) = loss_and_grads(params, ctx, train_nodes, 0)?;
    Ok((mse_of(&pred, ctx.volumes(), train_nodes), grads))
}

/// Full-batch Adam on the train MSE with early stopping on validation MSE
/// (train MSE when no validation nodes are given). The best parameters seen
/// are restored before returning.
pub fn train(
    params: &mut HybridModelParams,
    graph: &NetworkGraph,
    split: &SplitAssignment,
    config: &ModelConfig,
) -> Result<TrainReport, ModelError> {
    train_in(params, &GraphContext::new(graph), &split.train_vec(), &split.val_vec(), config)
}

pub fn train_in(
    params: &mut HybridModelParams,
    ctx: &GraphContext,
    train_nodes: &[usize],
    val_nodes: &[usize],
    config: &ModelConfig,
) -> Result<TrainReport, ModelError> {
    config.validate()?;
    ctx.check(params.shape())?;
    if train_nodes.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    check_nodes(ctx, train_nodes)?;
    check_nodes(ctx, val_nodes)?;
    if config.scale_targets && params.target.is_none() {
        let labels: Vec<f64> = train_nodes.iter().map(|&i| ctx.volumes()[i]).collect();
        params.target = Some(TargetScale::fit(&labels));
    }
    let monitor = if val_nodes.is_empty() { train_nodes } else { val_nodes };

    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate));
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut curve = Vec::new();
    let mut since_best = 0;
    let mut initial = f64::NAN;
    let mut steps = 0;

    // Each pass scores the parameters as they stand, then steps; one extra
    // pass at the end scores the final step.
    for epoch in 0..=config.max_epochs {
        let (pred, grads) = if epoch < config.max_epochs {
            let (pred, grads) = loss_and_grads(params, ctx, train_nodes, epoch)?;
            (pred, Some(grads))
        } else {
            (predict_in(params, ctx)?, None)
        };
        let train_mse = mse_of(&pred, ctx.volumes(), train_nodes);
        let val_mse = mse_of(&pred, ctx.volumes(), monitor);
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(ModelError::NonFiniteLoss(epoch));
        }
        if epoch == 0 {
            initial = val_mse;
        }
        curve.push(EpochStats { epoch, train_mse, val_mse });

        if best.as_ref().map_or(true, |b| val_mse < b.0) {
            best = Some((val_mse, epoch, params.tensors().to_vec()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
        if let Some(grads) = grads {
            adam.step(&mut params.tensors_mut(), &grads)?;
            steps += 1;
        }
    }

    let (best_val, best_epoch, tensors) = best.expect("at least one epoch is scored");
    for (dst, src) in params.tensors_mut().into_iter().zip(tensors) {
        *dst = src;
    }
    Ok(TrainReport {
        epochs_run: steps,
        best_epoch,
        best_val_mse: best_val,
        initial_val_mse: initial,
        train_curve: curve,
        wall_seconds: 0.0,
    })
}

/// Exactly `epochs` Adam steps from the current parameters with a fresh
/// optimizer and no early stopping. Returns the train MSE after the last step.
pub fn warm_finetune(
    params: &mut HybridModelParams,
    graph: &NetworkGraph,
    train_nodes: &[usize],
    epochs: usize,
    learning_rate: f64,
) -> Result<f64, ModelError> {
    warm_finetune_in(params, &GraphContext::new(graph), train_nodes, epochs, learning_rate)
}

pub fn warm_finetune_in(
    params: &mut HybridModelParams,
    ctx: &GraphContext,
    train_nodes: &[usize],
    epochs: usize,
    learning_rate: f64,
) -> Result<f64, ModelError> {
    ctx.check(params.shape())?;
    if train_nodes.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    check_nodes(ctx, train_nodes)?;
    let mut adam = Adam::new(AdamConfig::with_lr(learning_rate));
    for epoch in 0..epochs {
        let (_, grads) = loss_and_grads(params, ctx, train_nodes, epoch)?;
        adam.step(&mut params.tensors_mut(), &grads)?;
    }
    evaluate_mse(params, ctx, train_nodes)
}

/// Mean squared error over `nodes`; zero for an empty set.
pub fn evaluate_mse(params: &HybridModelParams, ctx: &GraphContext, nodes: &[usize]) -> Result<f64, ModelError> {
    check_nodes(ctx, nodes)?;
    let pred = predict_in(params, ctx)?;
    Ok(mse_of(&pred, ctx.volumes(), nodes))
}
