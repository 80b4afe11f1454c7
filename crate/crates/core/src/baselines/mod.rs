//! Rule-based placement policies and feature-only regressors.

mod centrality;
mod placement;
mod tabular;

pub use centrality::{betweenness, bfs_distances, closeness, CentralityKind, CentralityScores};
pub use placement::{activity_proxy, select_by_strategy, select_excluding, PlacementStrategy, StrategyKind};
pub use tabular::{select_rows, train_tabular, Standardizer, TabularConfig, TabularKind, TabularModel};

use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("observed-activity placement needs an activity vector")]
    MissingActivityVector,
    #[error("activity vector has {got} entries for {expected} nodes")]
    ActivityLength { expected: usize, got: usize },
    #[error("budget {budget} exceeds the {available} available candidates")]
    BudgetTooLarge { budget: usize, available: usize },
    #[error("learned placement is not available as a heuristic")]
    NotAHeuristic,
    #[error("design matrix is singular")]
    DegenerateDesignMatrix,
    #[error("no training rows")]
    EmptyTrainingSet,
    #[error("{rows} feature rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("model expects {expected} features, got {got}")]
    FeatureWidth { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
