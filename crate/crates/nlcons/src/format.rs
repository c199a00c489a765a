//! Structured documents (scenarios, graphs, reports) in JSON or TOML,
//! chosen by file extension.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: unsupported extension (expected .json or .toml)", path.display())]
    Extension { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("serialization failed: {0}")]
    Render(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentFormat {
    Json,
    Toml,
}

impl DocumentFormat {
    pub fn from_path(path: &Path) -> Result<Self, FormatError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(Self::Json),
            Some("toml") => Ok(Self::Toml),
            _ => Err(FormatError::Extension {
                path: path.to_path_buf(),
            }),
        }
    }

    pub fn parse<T: DeserializeOwned>(self, text: &str, path: &Path) -> Result<T, FormatError> {
        let parsed = match self {
            Self::Json => serde_json::from_str(text).map_err(|e| e.to_string()),
            Self::Toml => toml::from_str(text).map_err(|e| e.to_string()),
        };
        parsed.map_err(|message| FormatError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn render<T: Serialize>(self, value: &T) -> Result<String, FormatError> {
        let mut text = match self {
            Self::Json => serde_json::to_string_pretty(value).map_err(|e| FormatError::Render(e.to_string()))?,
            Self::Toml => toml::to_string_pretty(value).map_err(|e| FormatError::Render(e.to_string()))?,
        };
        if !text.ends_with('\n') {
            text.push('\n');
        }
        Ok(text)
    }
}
