//! Learned static state masks for behavior cloning.
//!
//! A mask `M` (n×n, rows on the probability simplex) turns a disentangled
//! state `s` into `z = M s`; a policy MLP maps `z` to an action. Mask and
//! policy are trained together with nothing but the imitation loss. Because
//! the expert ignores irrelevant state elements, the gradients reaching the
//! mask drive their columns toward zero, and sparsemax rows make those zeros
//! exact.
//!
//! Modules:
//! * [`math`]: tensors, taped reverse-mode differentiation, simplex
//!   normalizers, finite differences.
//! * [`mask`]: mask parameterizations, `z = M s`, column relevance.
//! * [`policy`]: the MLP head, the imitation loss, Jacobian probes.
//! * [`world`]: point-mass tasks, scripted experts, demonstrations, rollouts.
//! * [`trainer`]: joint training, baselines, latent probes, comparisons.
//! * [`cli`]: the `maskgrad` command-line tool.

pub mod cli;
pub mod error;
pub mod mask;
pub mod math;
pub mod model;
pub mod policy;
pub mod trainer;
pub mod world;

pub use error::{Error, Result};
