use mosaic_core::MosaicError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config, or registry.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed, or unusable data.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<MosaicError> for CliError {
    fn from(e: MosaicError) -> CliError {
        if e.is_config() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
