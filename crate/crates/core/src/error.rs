use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Every message is prefixed with the module that produced it so that
/// front ends can attribute numeric failures without inspecting variants.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{module}: invalid input: {message}")]
    InvalidInput {
        module: &'static str,
        message: String,
    },

    #[error("bpf: non-finite function value in block {block}")]
    NonFiniteProjection { block: usize },

    #[error("bpf: time {t} outside [0, {horizon})")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("{module}: basis mismatch ({left} vs {right})")]
    BasisMismatch {
        module: &'static str,
        left: String,
        right: String,
    },

    #[error("opmat: singular lower-triangular Toeplitz matrix (leading entry {leading})")]
    Singular { leading: f64 },

    #[error("{module}: non-finite intermediate in {context}")]
    NonFinite {
        module: &'static str,
        context: String,
    },

    #[error("dosys: assembly of system `{system}` failed: {reason}")]
    Assembly { system: String, reason: String },

    #[error("{module}: random parameter `{name}` is not bound")]
    UnboundParameter { module: &'static str, name: String },

    #[error("detsolve: unsupported system form: {0}")]
    UnsupportedForm(String),

    #[error("{module}: covariance is not positive semi-definite: {message}")]
    PsdViolation {
        module: &'static str,
        message: String,
    },

    #[error("{module}: no convergence: {message}")]
    Convergence {
        module: &'static str,
        message: String,
    },

    #[error("stochsolve: cubature node {index} ({node}) failed: {source}")]
    CubatureNode {
        index: usize,
        node: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(module: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn non_finite(module: &'static str, context: impl Into<String>) -> Self {
        Error::NonFinite {
            module,
            context: context.into(),
        }
    }

    pub(crate) fn convergence(module: &'static str, message: impl Into<String>) -> Self {
        Error::Convergence {
            module,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
