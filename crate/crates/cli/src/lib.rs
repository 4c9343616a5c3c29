//! Library side of the `mvsearch` command-line tool. Each subcommand is a
//! plain function so it can be driven from tests.

pub mod bench;
pub mod commands;

use mvsearch_core::eval::EvalError;
use mvsearch_core::features::FeatureError;
use mvsearch_core::index::IndexError;
use mvsearch_core::manifest::ManifestError;
use mvsearch_core::vocabulary::VocabError;
use mvsearch_core::FormatError;
use thiserror::Error;

/// Errors grouped by the process exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

fn format_is_io(e: &FormatError) -> bool {
    matches!(e, FormatError::Io(_))
}

fn feature_is_io(e: &FeatureError) -> bool {
    match e {
        FeatureError::Io(_) => true,
        FeatureError::Format(f) => format_is_io(f),
        _ => false,
    }
}

fn index_is_io(e: &IndexError) -> bool {
    match e {
        IndexError::Io(_) => true,
        IndexError::View { source, .. } => feature_is_io(source),
        IndexError::Format(f) => format_is_io(f),
        IndexError::Vocab(VocabError::Io(_)) => true,
        IndexError::Vocab(VocabError::Format(f)) => format_is_io(f),
        _ => false,
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        if index_is_io(&e) {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Index(i) => i.into(),
            EvalError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Wraps a per-file feature error with the offending path.
pub(crate) fn view_error(path: &std::path::Path, e: FeatureError) -> CliError {
    let msg = format!("{}: {e}", path.display());
    if feature_is_io(&e) {
        CliError::Io(msg)
    } else {
        CliError::Data(msg)
    }
}
