//! Training-free transport of task vectors between dense models of
//! different widths and depths.
//!
//! A task vector `τ_A = θ_A^ft − θ_A` is moved to a target model `B` by
//! aligning paired activations of both models with orthogonal Procrustes
//! maps and rotating the update, `τ_B = T_outᵀ τ_A T_in`. The crate also
//! carries the comparison baselines and a small experiment harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod seqalign;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result};
pub use exec::Exec;
pub use linalg::Matrix;
pub use tensor::Tensor3;
