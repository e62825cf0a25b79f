//! Energy-constrained operator norms, channel distances and their bounds on
//! finite truncated spaces.

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod distance;
pub mod energy;
pub mod enorm;
pub mod error;
pub mod instances;
pub mod io;
pub mod matcore;
pub mod truncate;

pub use error::{Error, Result};
