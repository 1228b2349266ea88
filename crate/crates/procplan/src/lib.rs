//! Structure-aware procedure planning: a procedural knowledge graph of
//! action transitions, hard and differentiable Viterbi decoding over it,
//! an emission network trained end to end through the differentiable
//! decoder, and a bootstrap-based evaluation harness over synthetic
//! procedural tasks.

pub mod bootstrap;
pub mod cli;
pub mod dvl;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pkg;
pub mod synth;
pub mod taxonomy;
pub mod train;
pub mod viterbi;

pub use error::{Error, Result};
