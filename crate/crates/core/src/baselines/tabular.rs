//! Feature-only regressors: they see node features and nothing of the graph.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::math;
use crate::optim::{Adam, AdamConfig};
use crate::rng::{seeded, Stream};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabularKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    pub ridge: f64,
    pub mlp_hidden: usize,
    pub mlp_epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self { ridge: 1e-6, mlp_hidden: 64, mlp_epochs: 300, learning_rate: 1e-3, seed: 0 }
    }
}

/// Per-column affine standardization; zero-variance columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Tensor) -> Self {
        let (m, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for i in 0..m {
            for (j, v) in x.row_slice(i).iter().enumerate() {
                mean[j] += v / m as f64;
            }
        }
        for i in 0..m {
            for (j, v) in x.row_slice(i).iter().enumerate() {
                scale[j] += (v - mean[j]) * (v - mean[j]) / m as f64;
            }
        }
        let scale = scale.into_iter().map(|v| if v > 1e-12 { math::sqrt(v) } else { 1.0 }).collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        let d = x.cols();
        let data = x.data().iter().enumerate().map(|(k, v)| (v - self.mean[k % d]) / self.scale[k % d]).collect();
        Tensor::matrix(x.rows(), d, data).expect("same shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TabularModel {
    Linear { coef: Vec<f64>, intercept: f64 },
    Mlp { input: Standardizer, params: Vec<Tensor>, target_mean: f64, target_scale: f64 },
}

fn check_inputs(features: &Tensor, labels: &[f64]) -> Result<(), BaselineError> {
    if labels.is_empty() || features.rows() == 0 {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if features.rows() != labels.len() {
        return Err(BaselineError::LabelCount { rows: features.rows(), labels: labels.len() });
    }
    Ok(())
}

pub fn train_tabular(
    kind: TabularKind,
    features: &Tensor,
    labels: &[f64],
    config: &TabularConfig,
) -> Result<TabularModel, BaselineError> {
    check_inputs(features, labels)?;
    match kind {
        TabularKind::Linear => fit_linear(features, labels, config.ridge),
        TabularKind::Mlp => fit_mlp(features, labels, config),
    }
}

/// Ridge least squares on centered data, so the intercept is unpenalized.
fn fit_linear(x: &Tensor, y: &[f64], ridge: f64) -> Result<TabularModel, BaselineError> {
    let (m, d) = (x.rows(), x.cols());
    let y_mean = y.iter().sum::<f64>() / m as f64;
    let mut x_mean = vec![0.0; d];
    for i in 0..m {
        for (j, v) in x.row_slice(i).iter().enumerate() {
            x_mean[j] += v / m as f64;
        }
    }
    // Normal equations (XcᵀXc + λI) β = Xcᵀ yc.
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for i in 0..m {
        let row = x.row_slice(i);
        for a in 0..d {
            let xa = row[a] - x_mean[a];
            rhs[a] += xa * (y[i] - y_mean);
            for b in 0..d {
                gram[a][b] += xa * (row[b] - x_mean[b]);
            }
        }
    }
    for (a, row) in gram.iter_mut().enumerate() {
        row[a] += ridge;
    }
    let coef = solve(gram, rhs)?;
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(TabularModel::Linear { coef, intercept })
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, BaselineError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| math::abs(a[i][col]).total_cmp(&math::abs(a[j][col]))).expect("non-empty");
        if !(math::abs(a[pivot][col]) > 1e-300) {
            return Err(BaselineError::DegenerateDesignMatrix);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(BaselineError::DegenerateDesignMatrix)
    }
}

fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let a = math::sqrt(6.0 / (rows + cols) as f64);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-a..a)).collect()).expect("sized")
}

fn mlp_forward(tape: &mut Tape, p: &[Var], x: Var) -> Result<Var, BaselineError> {
    let mut h = x;
    for layer in 0..2 {
        let z = tape.matmul(h, p[2 * layer])?;
        let z = tape.add_row(z, p[2 * layer + 1])?;
        h = tape.relu(z);
    }
    let z = tape.matmul(h, p[4])?;
    Ok(tape.add_row(z, p[5])?)
}

/// Two ReLU hidden layers, full-batch Adam on standardized inputs and targets.
fn fit_mlp(x: &Tensor, y: &[f64], config: &TabularConfig) -> Result<TabularModel, BaselineError> {
    let input = Standardizer::fit(x);
    let xs = input.apply(x);
    let m = y.len() as f64;
    let target_mean = y.iter().sum::<f64>() / m;
    let var = y.iter().map(|v| (v - target_mean) * (v - target_mean)).sum::<f64>() / m;
    let target_scale = if var > 1e-12 { math::sqrt(var) } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - target_mean) / target_scale).collect();

    let h = config.mlp_hidden.max(1);
    let mut rng = seeded(config.seed, Stream::Tabular);
    let mut params = vec![
        glorot(&mut rng, x.cols(), h),
        Tensor::zeros(1, h),
        glorot(&mut rng, h, h),
        Tensor::zeros(1, h),
        glorot(&mut rng, h, 1),
        Tensor::zeros(1, 1),
    ];
    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate));
    for _ in 0..config.mlp_epochs {
        let mut tape = Tape::new();
        let p: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone().with_grad(true))).collect();
        let xv = tape.constant(xs.clone());
        let out = mlp_forward(&mut tape, &p, xv)?;
        let neg = tape.constant(Tensor::column(ys.iter().map(|v| -v).collect()));
        let diff = tape.add(out, neg)?;
        let sq = tape.square(diff);
        let loss = tape.mean(sq)?;
        let grads = tape.backward(loss)?;
        let g: Vec<Tensor> = p.iter().map(|&v| grads.wrt(v)).collect();
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        adam.step(&mut refs, &g)?;
    }
    Ok(TabularModel::Mlp { input, params, target_mean, target_scale })
}

impl TabularModel {
    pub fn predict(&self, features: &Tensor) -> Result<Vec<f64>, BaselineError> {
        match self {
            TabularModel::Linear { coef, intercept } => {
                if features.cols() != coef.len() {
                    return Err(BaselineError::FeatureWidth { expected: coef.len(), got: features.cols() });
                }
                Ok((0..features.rows())
                    .map(|i| intercept + features.row_slice(i).iter().zip(coef).map(|(x, c)| x * c).sum::<f64>())
                    .collect())
            }
            TabularModel::Mlp { input, params, target_mean, target_scale } => {
                if features.cols() != input.mean.len() {
                    return Err(BaselineError::FeatureWidth { expected: input.mean.len(), got: features.cols() });
                }
                let mut tape = Tape::new();
                let p: Vec<Var> = params.iter().map(|t| tape.constant(t.clone())).collect();
                let x = tape.constant(input.apply(features));
                let out = mlp_forward(&mut tape, &p, x)?;
                Ok(tape.value(out).data().iter().map(|v| target_mean + target_scale * v).collect())
            }
        }
    }
}

/// Rows of `features` for the listed nodes.
pub fn select_rows(features: &Tensor, nodes: &[usize]) -> Tensor {
    let d = features.cols();
    let mut data = Vec::with_capacity(nodes.len() * d);
    for &i in nodes {
        data.extend_from_slice(features.row_slice(i));
    }
    Tensor::matrix(nodes.len(), d, data).expect("sized")
}
