//! File formats, experiment configs and the run/compare/verify workflow
//! around [`ovna_core`].

pub mod config;
pub mod container;
pub mod runner;
pub mod tables;

pub use config::{ExperimentConfig, Issue};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Issue>),

    #[error(transparent)]
    Core(#[from] ovna_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("serialization error: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("report does not match its data:\n  {}", .0.join("\n  "))]
    Verification(Vec<String>),
}

impl Error {
    /// Config problems (parse or constraint) as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::TomlDe(_))
            || matches!(
                self,
                Error::Core(ovna_core::Error::Config(_) | ovna_core::Error::InvalidInput(_))
            )
    }
}
