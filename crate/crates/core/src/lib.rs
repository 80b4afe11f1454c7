//! Sparse road-network volume estimation and learned sensor placement.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats, the CLI, and parallel drivers live in the
//! `roadsense` companion crate.
//!
//! Layout:
//! - [`graph`], [`partition`], [`synthetic`]: networks, sensor sets, splits.
//! - [`tensor`], [`optim`], [`checkpoint`]: reverse-mode autodiff and Adam.
//! - [`model`]: the hybrid GCN/GAT regressor.
//! - [`agent`]: the DQN placement agent.
//! - [`baselines`]: centrality, random and activity placement; tabular models.
//! - [`metrics`], [`coverage`], [`experiment`]: evaluation and experiment runs.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod agent;
pub mod baselines;
pub mod checkpoint;
pub mod coverage;
pub mod experiment;
pub mod graph;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod partition;
pub mod rng;
pub mod synthetic;
pub mod tensor;

pub use graph::{normalized_adjacency, GraphError, NetworkGraph, RoadClass, RoadEdge, RoadNode};
pub use partition::{make_partition, make_splits, sparsity, SensorPartition, SplitAssignment};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use tensor::{Tape, Tensor, TensorError, Var};
