//! Orchestration behind the `rpg` binary: configuration, run records,
//! image export and the four commands.

mod commands;
mod config;
mod png;

pub use commands::{
    build_backend, build_denoiser, cmd_edit, cmd_generate, cmd_loop, cmd_plan, load_plan_file, load_world,
    region_table, replay_record, round_log, CommandOutput, TranscriptBackend,
};
pub use config::{BackendChoice, CaptionerChoice, DenoiserChoice, EditPlannerChoice, RunConfig, RunRecord};
pub use png::{latent_to_image, png_bytes, to_byte, write_png, PNG_HIGH, PNG_LOW};

use thiserror::Error;

use crate::denoisers::DenoiseError;
use crate::diffusion::DiffusionError;
use crate::edit::EditError;
use crate::planner::{BackendError, PlannerError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Internal(String),
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;
pub const EXIT_PARSE: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

impl From<DenoiseError> for PipelineError {
    fn from(e: DenoiseError) -> Self {
        match e {
            DenoiseError::BadWorld { .. } => PipelineError::Parse(e.to_string()),
            other => PipelineError::Diffusion(other.into()),
        }
    }
}

fn planner_code(e: &PlannerError) -> u8 {
    match e {
        PlannerError::EmptyInput(_) => EXIT_USAGE,
        PlannerError::Backend(BackendError::EmptyMessage(_)) => EXIT_USAGE,
        PlannerError::Backend(BackendError::Io(_)) => EXIT_INTERNAL,
        PlannerError::Backend(BackendError::BadResponse(_)) => EXIT_PARSE,
        PlannerError::Backend(_) => EXIT_BACKEND,
        _ => EXIT_PARSE,
    }
}

fn diffusion_code(e: &DiffusionError) -> u8 {
    match e {
        DiffusionError::PlanInvalid(_)
        | DiffusionError::Layout(_)
        | DiffusionError::NestingTooDeep { .. }
        | DiffusionError::BadLatentFile(_)
        | DiffusionError::RegionOutOfBounds(_)
        | DiffusionError::PartitionViolation(_) => EXIT_PARSE,
        DiffusionError::BadStepCount(_) | DiffusionError::BadBaseRatio(_) | DiffusionError::EmptyMask => EXIT_USAGE,
        _ => EXIT_INTERNAL,
    }
}

impl PipelineError {
    /// Process exit code: 2 usage, 3 auth or network, 4 parse or invalid
    /// plan, 5 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Usage(_) => EXIT_USAGE,
            PipelineError::Planner(e) => planner_code(e),
            PipelineError::Diffusion(e) => diffusion_code(e),
            PipelineError::Edit(e) => match e {
                EditError::Planner(p) => planner_code(p),
                EditError::Diffusion(d) => diffusion_code(d),
                EditError::NoRounds | EditError::Config(_) => EXIT_USAGE,
                EditError::Regions(_) | EditError::MaskFile { .. } => EXIT_PARSE,
            },
            PipelineError::Parse(_) => EXIT_PARSE,
            PipelineError::Io { .. } | PipelineError::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), source }
    }
}
