//! Configuration, staged pipeline and run summary behind the `eventsom`
//! command.

pub mod config;
pub mod pipeline;
pub mod summary;

use std::path::Path;

pub use config::{Overrides, RunConfig};
pub use pipeline::{execute, Stage};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("missing {file} (run the `{stage}` stage first)")]
    MissingArtifact { file: String, stage: &'static str },

    #[error(transparent)]
    Runtime(#[from] eventsom::Error),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// 1 for configuration and missing-stage problems, 2 for failures while
    /// running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::MissingArtifact { .. } => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
        }
    }
}

/// Loads, overrides, resolves and validates a config file.
pub fn prepare_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(overrides);
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

/// Stages run by each subcommand.
pub fn stages_for(command: &str, cfg: &RunConfig) -> Option<Vec<Stage>> {
    let with_generate = |mut rest: Vec<Stage>| {
        if cfg.scenario.is_some() {
            rest.insert(0, Stage::Generate);
        }
        rest
    };
    Some(match command {
        "generate" => vec![Stage::Generate],
        "study" => vec![Stage::Study],
        "som" => vec![Stage::Som],
        "report" => vec![Stage::Report],
        "run" => with_generate(vec![Stage::Study, Stage::Som, Stage::Report]),
        _ => return None,
    })
}
