use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty request: {0}")]
    EmptyRequest(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} outside 0..{bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error(
        "quadrature did not converge on [{lower}, {upper}]: estimate {estimate:e}, \
         error {error:e} after {subdivisions} subdivisions"
    )]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("particle {0} is not alive")]
    DeadParticle(usize),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
