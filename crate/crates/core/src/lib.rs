//! Label denoising for node classification with graph-aware leave-one-out
//! influence functions.
//!
//! A two-layer GCN is trained on a graph whose training labels are noisy.
//! For every training node `z` and every node `v` of a small clean set, the
//! first-order change of `v`'s loss under removal of `z` (edges included) is
//! estimated through inverse Hessian-vector products. Nodes whose removal is
//! predicted to help the clean set are relabelled to the runner-up class and
//! a second model is trained on the repaired labels.
//!
//! Module map:
//!
//! - [`graph`]: data model, CSV/JSON ingestion, normalized adjacency, SBM generator
//! - [`noise`]: SLN and pairwise transition matrices, label corruption
//! - [`gcn`]: the network, its exact gradient and Hessian-vector product, training
//! - [`influence`]: HVP operator, CG solver, node/edge/relabel influence, `I_up` table
//! - [`denoise`]: detectors, relabelling, the full pipeline, successive passes, sweeps
//! - [`oracle`]: brute-force retraining used to validate the approximations
//! - [`experiment`]: configuration, manifests and the subcommands behind the `deglif` binary

pub mod denoise;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod graph;
pub mod influence;
pub mod noise;
pub mod oracle;
pub mod stats;

pub use error::{Error, Result};
