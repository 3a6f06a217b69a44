use std::path::{Path, PathBuf};

use eadl_core::Error as CoreError;

/// Why a checkpoint file could not be read. Each variant has its own code.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("unreadable metadata: {0}")]
    Metadata(String),
    #[error("manifest inconsistent with config: {0}")]
    Manifest(String),
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::BadMagic(_) => "format.magic",
            FormatError::BadVersion(_) => "format.version",
            FormatError::Metadata(_) => "format.metadata",
            FormatError::Manifest(_) => "format.manifest",
            FormatError::Truncated { .. } => "format.truncated",
            FormatError::TrailingBytes(_) => "format.trailing",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        LabError::Format { path: path.to_path_buf(), source }
    }

    /// Process exit status: 1 usage, 2 data or format, 3 contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) => 1,
            LabError::Io { .. } | LabError::Format { .. } | LabError::Data(_) => 2,
            LabError::Core(e) => match e {
                CoreError::Parameter(_) => 1,
                CoreError::Input(_) | CoreError::Parse { .. } | CoreError::Numeric(_) => 2,
                CoreError::Dimension(_)
                | CoreError::Length { .. }
                | CoreError::Unsupported(_)
                | CoreError::Protocol(_)
                | CoreError::Contract(_) => 3,
            },
        }
    }

    /// Short machine-readable category shown after the exit code.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Usage(_) => "usage",
            LabError::Io { .. } => "io",
            LabError::Format { source, .. } => source.code(),
            LabError::Data(_) => "data",
            LabError::Core(e) => match e {
                CoreError::Dimension(_) => "dimension",
                CoreError::Parameter(_) => "parameter",
                CoreError::Length { .. } => "length",
                CoreError::Input(_) => "input",
                CoreError::Unsupported(_) => "unsupported",
                CoreError::Numeric(_) => "numeric",
                CoreError::Protocol(_) => "protocol",
                CoreError::Contract(_) => "contract",
                CoreError::Parse { .. } => "parse",
            },
        }
    }

    /// The single stderr line reported for this error.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("ERR {}: {}: {}", self.exit_code(), self.kind(), msg)
    }
}
