//! Quantization analysis of speech LSF parameters with von Mises-Fisher mixture models.

// `!(x > 0.0)` is used on purpose throughout: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod frontend;
pub mod mixture;
pub mod model;
pub mod pipeline;
pub mod rate;
pub mod special;
pub mod transforms;
pub mod vmf;

pub use error::{Error, Result};
