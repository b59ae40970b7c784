// NaN-rejecting comparisons are written as `!(a < b)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod decay;
pub mod error;
pub mod io;
pub mod linalg;
pub mod scap;
pub mod scenario;
pub mod simkit;
pub mod synth;
pub mod sysmodel;

pub use error::{Error, Result};
