#![no_std]
// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Spectral-filter kernel regression with a fully data-driven balancing
//! (Lepskii-type) choice of the regularization parameter.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod balancing;
pub mod diagnostics;
pub mod error;
pub mod filters;
pub mod kernels;
pub mod linalg;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
