use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called outside its documented domain.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A simulation produced a non-finite state.
    #[error("numerical failure in run {run:?} at event {event}: {detail}")]
    Numerical {
        run: Option<usize>,
        event: u64,
        detail: String,
    },

    #[error("no reference oracle for {0}")]
    UnsupportedOracle(String),

    /// Parameters for which a reference density is not a probability density.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// Attach the ensemble run index to a numerical failure.
    pub fn in_run(self, run: usize) -> Self {
        match self {
            Error::Numerical { event, detail, .. } => Error::Numerical {
                run: Some(run),
                event,
                detail,
            },
            other => other,
        }
    }

    /// Process exit status: 2 for configuration and domain errors, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Precondition(_) | Error::Domain(_) | Error::UnsupportedOracle(_) => 2,
            Error::Numerical { .. } => 3,
            Error::Io(_) | Error::Serialization(_) => 1,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}
