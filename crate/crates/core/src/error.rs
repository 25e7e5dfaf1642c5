use thiserror::Error;

/// Errors raised anywhere in the estimation stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("mean {mu} is outside the domain of the {family} family")]
    InvalidMean { family: &'static str, mu: f64 },

    #[error("response {y} is outside the support of the {family} family")]
    InvalidResponse { family: &'static str, y: f64 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("the {family} family has known dispersion; {what} is undefined")]
    DispersionKnown {
        family: &'static str,
        what: &'static str,
    },

    #[error("({family}, {link}) is not a supported closed-form row")]
    UnsupportedPair {
        family: &'static str,
        link: &'static str,
    },

    #[error("special function {name} undefined at {x}")]
    Domain { name: &'static str, x: f64 },

    #[error("design matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("link derivative vanished at observation {index}")]
    SingularLink { index: usize },

    #[error("invalid working state: {0}")]
    InvalidState(String),

    #[error("fit failed after {halvings} step halvings at iteration {iteration}")]
    FitFailure { iteration: usize, halvings: usize },

    #[error("not enough residual degrees of freedom (n = {n}, p = {p})")]
    DegreesOfFreedom { n: usize, p: usize },

    #[error("expected information is singular")]
    SingularInformation,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("multinomial row {row} has a zero total")]
    DegenerateRow { row: usize },

    #[error("study failed: {method} failed in {failures} of {replicates} replicates")]
    StudyFailure {
        method: String,
        failures: usize,
        replicates: usize,
    },
}

pub type Result<T> = std::result::Result<T, GlmError>;
