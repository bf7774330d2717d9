use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Malformed input file. `offset` is a byte offset for binary files and a
/// 1-based row number for CSV.
#[derive(Debug, Error)]
#[error("{}: {message}{}", path.display(), location(*offset, *row))]
pub struct ParseError {
    pub path: PathBuf,
    pub offset: Option<u64>,
    pub row: Option<u64>,
    pub message: String,
}

fn location(offset: Option<u64>, row: Option<u64>) -> String {
    match (offset, row) {
        (Some(o), _) => format!(" (at byte {o})"),
        (None, Some(r)) => format!(" (at row {r})"),
        (None, None) => String::new(),
    }
}

impl ParseError {
    pub fn at_byte(path: &Path, offset: u64, message: impl Into<String>) -> Self {
        Self { path: path.to_path_buf(), offset: Some(offset), row: None, message: message.into() }
    }

    pub fn at_row(path: &Path, row: u64, message: impl Into<String>) -> Self {
        Self { path: path.to_path_buf(), offset: None, row: Some(row), message: message.into() }
    }

    pub fn whole(path: &Path, message: impl Into<String>) -> Self {
        Self { path: path.to_path_buf(), offset: None, row: None, message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Domain(#[from] dflim_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("{0}")]
    Usage(String),
}

impl AppError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        AppError::Io { path: path.to_path_buf(), source }
    }

    /// 1 for detection-domain failures, 2 for I/O, parse and usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Domain(_) => 1,
            AppError::Io { .. } | AppError::Parse(_) | AppError::Usage(_) => 2,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

/// Attaches a path to an I/O error.
pub(crate) trait IoContext<T> {
    fn at(self, path: &Path) -> AppResult<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &Path) -> AppResult<T> {
        self.map_err(|e| AppError::io(path, e))
    }
}
