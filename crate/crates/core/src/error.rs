use thiserror::Error;

use crate::diagram::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("variable index {0} is out of range")]
    UnknownNode(usize),

    #[error("`{node}` cannot be evaluated: `{missing}` is not assigned")]
    MissingAssignment { node: String, missing: String },

    #[error("value {value} is not in the domain of `{node}`")]
    OutOfDomain { node: String, value: String },

    #[error("diagram is not valid:\n{0}")]
    Invalid(ValidationReport),

    #[error("not an embedded chain: {0}")]
    NotAChain(String),

    #[error("Markov blanket of `{0}` gives zero mass to every value")]
    BlanketInconsistency(String),

    #[error("no Gibbs kernel for continuous variable `{0}` (it has children and no closed-form conditional)")]
    NoGibbsKernel(String),

    #[error("contradictory evidence: {0}")]
    Contradictory(String),

    #[error(
        "rejection budget exhausted after {attempts} forward attempts ({rejections} rejected, rate {rate:.4})",
        rate = *rejections as f64 / (*attempts).max(1) as f64
    )]
    RejectionBudget { attempts: u64, rejections: u64 },

    #[error("enumeration needs {0} configurations, above the cap of 1e6")]
    TooLarge(u128),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
