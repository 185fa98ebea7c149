//! Federated multi-view subspace clustering.
//!
//! Every participating node owns one view `Xᵏ` (features × samples) of the same
//! sample set. Nodes learn a self-expressive representation split into a
//! consistent part `Cᵏ` and a view-specific part `Uᵏ`; the server fuses the
//! consistent parts into a global subspace `G` with adaptive weights, builds a
//! k-NN hypergraph over the fused affinity and takes the bottom eigenvectors of
//! its normalized Laplacian as the cluster indicator `F`.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`dataset`] | loading, synthesis, vertical partitioning |
//! | [`local`] | per-node subspace learning |
//! | [`hypergraph`] | affinities, k-NN hypergraph, Laplacians, spectral embedding |
//! | [`server`] | adaptive fusion and indicator updates |
//! | [`federation`] | round orchestration, messages, full objective |
//! | [`eval`] | labels from the indicator, ACC / Purity / NMI |
//! | [`config`] | experiment configuration files |

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod federation;
pub mod hypergraph;
mod linalg;
pub mod local;
pub mod server;

pub use config::ExperimentConfig;
pub use dataset::{DatasetManifest, MultiViewDataset, NodeHandle, SynthesisSpec};
pub use error::{Error, Result};
pub use federation::{run_federation, FederationConfig, RunResult};

/// Dense column-major matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
