//! Graph-informed low-rank matrix contextual bandits.
//!
//! The crate is organised bottom-up:
//!
//! - [`graphs`]: random graph models, Laplacians and the quadratic kernel
//!   they induce on an action set.
//! - [`envs`]: reward families, synthetic instances and reward-matrix
//!   ingestion.
//! - [`stage1`]: truncated-moment subspace estimation and the change of
//!   coordinates built from it.
//! - [`stage2`]: penalized GLM fitting, design-matrix bookkeeping and UCB
//!   selection.
//! - [`policies`]: the two-stage policy and its baselines.
//! - [`harness`]: configuration, repeated paired experiments, metrics and
//!   CSV output.

// `!(x > 0.0)` guards reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envs;
pub mod error;
pub mod graphs;
pub mod harness;
pub mod linalg;
pub mod policies;
pub mod rng;
pub mod stage1;
pub mod stage2;

pub use error::{Error, Result};
