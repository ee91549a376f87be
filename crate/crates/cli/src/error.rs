use thiserror::Error;

use tension_core::beamsearch::SearchError;
use tension_core::seqmodel::ModelError;

/// Failure of a command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or unsuitable input files.
    #[error("{0}")]
    Input(String),
    /// The external model process failed.
    #[error("{0}")]
    External(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => 2,
            Self::External(_) => 3,
            Self::Internal(_) => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Protocol(_) | ModelError::Timeout(_) | ModelError::Process(_) => Self::External(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Model(m) => m.into(),
            SearchError::Distribution { .. } => Self::External(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Input(e.to_string())
            }
        }
    )*};
}

input_error!(
    tension_core::midi::MidiError,
    tension_core::tension::TensionError,
    tension_core::tokens::TokenError,
    tension_core::evalmetrics::EvalError,
    tension_core::music::MusicError
);

/// Failure writing command output.
impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Internal(format!("cannot write output: {e}"))
    }
}
