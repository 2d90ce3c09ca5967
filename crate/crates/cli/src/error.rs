//! Command errors and their exit codes.

use std::io;
use std::path::Path;

use reefforge_core::datasetkit::DatasetError;
use reefforge_core::evalbench::EvalError;
use reefforge_core::oystermesh::MeshError;
use reefforge_core::rasterizer::RenderError;
use reefforge_core::scenegen::SceneError;
use reefforge_core::synthclient::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Backend(String),
    #[error("{scene} (seed {seed}) failed at {stage}: {source}")]
    Stage {
        scene: String,
        seed: u64,
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    /// 1 validation, 2 I/O, 3 backend or transport.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Backend(_) => 3,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn at(self, scene: &str, seed: u64, stage: &'static str) -> CliError {
        CliError::Stage {
            scene: scene.to_string(),
            seed,
            stage,
            source: Box::new(self),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { path, source } => CliError::Io { path, source },
            DatasetError::Image { path, message } => CliError::Io {
                path,
                source: io::Error::new(io::ErrorKind::InvalidData, message),
            },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Validation(_) => CliError::Validation(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            // the runner is an external program
            EvalError::Runner { .. } => CliError::Backend(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
