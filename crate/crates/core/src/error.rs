use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input lies outside the domain of the kernel or model.
    #[error("input domain error: {0}")]
    InputDomain(String),

    /// A parameter is out of its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A numerical routine failed (eigensolver non-convergence, non-finite values).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A filter's declared constant does not hold on the verification grid.
    #[error(
        "declared constant {constant} violated at lambda={lambda:e}, t={t:e}: \
         observed {observed} exceeds declared {declared}"
    )]
    ConstantDeclaration {
        constant: &'static str,
        lambda: f64,
        t: f64,
        observed: f64,
        declared: f64,
    },

    /// A regularization parameter was requested that is not on the fitted grid.
    #[error("lookup error: lambda={0:e} is not on the estimator grid")]
    Lookup(f64),

    /// An estimator cannot be represented in the model basis.
    #[error("representation error: {0}")]
    Representation(String),

    /// The requested analysis is not available for this configuration.
    #[error("unsupported analysis: {0}")]
    Unsupported(String),

    /// A deterministic inequality check failed.
    #[error("property `{check}` violated in trial {trial} (seed {seed}): excess {excess:e}")]
    PropertyViolation {
        check: &'static str,
        seed: u64,
        trial: usize,
        excess: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
