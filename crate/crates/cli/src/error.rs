use std::io;
use std::path::PathBuf;

use spiking_nsm::NsmError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Nsm(#[from] NsmError),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 1 for usage, config and input problems, 2 when the numerics fail.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Nsm(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}
