//! Gradient-free classification with permutation-valued filters.
//!
//! Inputs are encoded as rankings of embedding dimensions, layers of
//! ranking filters compare them under Spearman's footrule, and filters learn
//! by accumulating position votes instead of gradients.

pub mod data;
pub mod encoder;
pub mod energy;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod layer;
pub mod network;
pub mod oracles;
pub mod perm;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use perm::{Norm, Permutation};
pub use rng::SeededRng;
