//! Two-stage "smoothing and thresholding" (SaT) semi-supervised classification
//! for high-dimensional point clouds.
//!
//! The pipeline is:
//!
//! 1. build a weighted k-NN graph over the point cloud ([`graph`]),
//! 2. produce a rough warm-start labeling ([`init`]),
//! 3. repeatedly smooth every class indicator with a convex graph model solved
//!    by an accelerated primal-dual method ([`solver`]) and project the fuzzy
//!    result back to a hard partition ([`pipeline`]).
//!
//! [`data`] generates and loads datasets and [`bench`] runs repeated trials
//! and reports accuracy.

pub mod bench;
pub mod data;
pub mod error;
pub mod graph;
pub mod init;
pub mod pipeline;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use graph::{
    build_graph, DataSplit, GradientOp, Graph, GraphConfig, KnnMode, LaplacianSplit, PointCloud,
    WeightKind,
};
pub use pipeline::{run_sat, LabelKind, LabelMatrix, SatConfig, SatOutcome};
pub use solver::{ModelParams, SolverConfig, StepRule};
