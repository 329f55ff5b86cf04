//! Informed Baseline Search for Integrated Gradients.
//!
//! The crate bundles everything needed to sample the inner decision
//! boundary of a small binary classifier and to pick, for every input under
//! analysis, the boundary point that makes the cleanest Integrated Gradients
//! baseline:
//!
//! - [`nn`]: a from-scratch feed-forward network (forward pass, input
//!   gradient, Adam/BCE training, lossless JSON model files).
//! - [`data`]: deterministic synthetic datasets (hypercube clusters,
//!   interleaved spirals, a simulated brain view) and their CSV format.
//! - [`attribution`]: Integrated Gradients with the Delta x
//!   Cumulated-Gradients factorization and path tracing.
//! - [`ibs`]: the boundary search itself, its lockstep batched variant and
//!   closest-boundary baseline selection.
//! - [`oracle`]: independent ground truth (grid level-set extraction,
//!   segment crossing counts, closed-form hyperplanes).
//! - [`harness`]: the experiment pipeline behind the `ibs` binary.

pub mod attribution;
pub mod data;
mod error;
pub mod harness;
pub mod ibs;
pub mod nn;
pub mod oracle;
pub mod seed;
pub mod svg;

pub use attribution::{
    decompose, gradient_along_path, integrated_gradients, integrated_gradients_with, Attribution,
    IgOptions, OutputSpace, PathTrace, TargetClass,
};
pub use data::{
    generate_brain, generate_hypercube, generate_spiral, BrainLayout, Dataset, HypercubeParams,
    Split,
};
pub use error::{Error, Result};
pub use ibs::{
    ibs_search, ibs_search_batch, sample_boundary, select_optimal_baseline, BaselineSelection,
    BoundarySample, BoundarySampling, PoolMode, SearchConfig,
};
pub use nn::{train, Metrics, NetworkSpec, TrainConfig, TrainedModel};
pub use oracle::{analytic_hyperplane, count_crossings, grid_boundary, CrossingReport, GridOracle};
