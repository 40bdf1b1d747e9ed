use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// The integrand is sign-indefinite (or unbounded) on a tail that the
    /// query has no bound for.
    #[error("indeterminate tail: {0}")]
    IndeterminateTail(String),
    #[error("partition block `{0}` has zero mass")]
    ZeroMassBlock(String),
    #[error("process is not terminating; limits at infinity are unavailable")]
    NotTerminating,
    #[error("stopping rule references the uniform variable but the space carries none")]
    MissingUniform,
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("construction not applicable: {0}")]
    NotApplicable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("atom {0} is not part of this space")]
    UnknownAtom(u64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndeterminateTail(_) => "indeterminate_tail",
            Error::ZeroMassBlock(_) => "zero_mass_block",
            Error::NotTerminating => "not_terminating",
            Error::MissingUniform => "missing_uniform",
            Error::PreconditionFailed(_) => "precondition_failed",
            Error::NotApplicable(_) => "not_applicable",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Parse(_) => "parse",
            Error::Unsupported(_) => "unsupported",
            Error::UnknownAtom(_) => "unknown_atom",
        }
    }
}
