//! Stochastic filtering toolkit.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

pub mod conditional;
pub mod epidemic;
pub mod factored;
pub mod filter;
pub mod graph;
pub mod harness;
pub mod lorenz;
pub mod prob;
