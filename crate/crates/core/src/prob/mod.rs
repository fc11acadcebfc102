//! Probability primitives shared by every model and filter.

mod dist;
mod rng;
mod special;

pub use dist::*;
pub use rng::{stream, tags, Stream, StreamFactory};
pub use special::{digamma, inverse_digamma, ln_gamma, reg_incomplete_beta, trigamma, EULER_GAMMA};

/// Errors raised by probability primitives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbError {
    #[error("domain error: {0}")]
    Domain(String),
}
