// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Config-driven experiments, rate studies, diagnostics and reports on top of
//! `lepski-core`.

pub mod baseline;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod rates;
pub mod report;

pub use config::ExperimentConfig;
pub use error::HarnessError;
