//! Prefix-aware internal reward model.
//!
//! A two-stage linear probe over transformer activations scores the
//! correctness of an agent turn: a hidden-state probe estimates how coherent
//! the turn is with its (possibly corrupted) history, and an attention-based
//! correction head maps that estimate plus per-head attention statistics to
//! a grounded correctness probability. The crate also ships the pieces needed
//! to use that score as a step-level reward: temperature clipping, a
//! momentum bonus in logit space, group-relative advantages, calibration and
//! ranking metrics, and a seeded synthetic corpus that reproduces the
//! clean / contaminated / adversarial-diagnostic evaluation geometry.
//!
//! Batch operations (scoring, corpus generation, baseline sweeps) fan out
//! over rayon when the default `parallel` feature is enabled and fall back to
//! sequential iteration otherwise. Results are order-preserving and
//! bit-identical in both builds.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod error;
pub mod features;
pub mod grpo;
pub mod io;
pub mod metrics;
pub mod pair;
pub mod probe;
pub mod reward;
pub mod synth;
pub mod trajectory;

mod par;

pub use error::{Error, Result};
