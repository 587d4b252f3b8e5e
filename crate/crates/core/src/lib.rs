// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod baselines;
pub mod env;
pub mod error;
pub mod events;
pub mod harness;
pub mod metrics;
pub mod radio;

pub use error::{Error, Result};
