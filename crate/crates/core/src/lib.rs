//! Finite dyadic laboratory for weighted counterexamples: dyadic trees, Muckenhoupt
//! characteristics, stopping-time rearrangements, remodeling and Hilbert pairings.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appendix;
pub mod characteristics;
pub mod dyadic;
pub mod error;
pub mod hilbert;
pub mod large_step;
pub mod numeric;
pub mod pipelines;
pub mod remodel;
pub mod report;
pub mod small_step;
pub mod tree;

pub use dyadic::DyadicInterval;
pub use error::{LabError, Result};
pub use tree::{AdaptiveTree, Node, Quad};
