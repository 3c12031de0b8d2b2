//! DDPM machinery and complementary regional diffusion.
//!
//! Every sampler here is generic over [`Denoiser`], which predicts the clean
//! latent given a noisy one. On top of plain ancestral sampling the module
//! provides:
//!
//! * [`crd_step`]: one timestep of regional sampling. A base branch denoises
//!   the whole canvas under the full prompt, one branch per subprompt
//!   produces that region's content, the region branches are assembled into
//!   a single canvas, and the result is blended with the base branch by the
//!   base ratio.
//! * [`sample_crd`] / [`sample_hierarchical`]: full loops from `z_T`, the
//!   latter allowing a region to be generated by its own nested plan.
//! * [`sample_inpaint`]: masked re-generation that clamps unmasked cells to
//!   the forward-noised source at every step.

mod crd;
mod ddpm;
mod inpaint;
mod latent;
mod resize;
mod schedule;

pub use crd::{blend, concat_regions, crd_step, sample_crd, sample_ddpm, sample_hierarchical, CrdBranches, PlanConds};
pub use ddpm::{ddpm_step, ddpm_step_with_noise, q_sample, NoiseSource};
pub use inpaint::{sample_inpaint, Mask};
pub use latent::{LatentGrid, LatentShape, RPGL_MAGIC, RPGL_VERSION};
pub use resize::{resize_latent, ResizeMode};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleKind};

use std::str::FromStr;

use thiserror::Error;

use crate::denoisers::{embed_prompt, CondEmbedding, DenoiseError};
use crate::layout::{LayoutError, PartitionViolation, RegionRect};
use crate::planner::PlanInvalid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("step count must be at least 1, got {0}")]
    BadStepCount(usize),
    #[error("beta {0} outside (0, 1)")]
    BadBeta(f64),
    #[error("timestep {t} outside the schedule's 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error("schedule has {schedule} steps but the sampler was configured for {config}")]
    ScheduleMismatch { schedule: usize, config: usize },
    #[error("invalid latent shape {0}")]
    BadShape(LatentShape),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: LatentShape, got: LatentShape },
    #[error("non-finite latent value at flat index {index}")]
    NonFinite { index: usize },
    #[error("resize target {width}x{height} must be at least 1x1")]
    BadTarget { width: usize, height: usize },
    #[error("region {0} lies outside the latent")]
    RegionOutOfBounds(RegionRect),
    #[error("placements do not partition the canvas: {0}")]
    PartitionViolation(#[from] PartitionViolation),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("invalid plan: {0}")]
    PlanInvalid(#[from] PlanInvalid),
    #[error("plan nesting depth {depth} exceeds the maximum of {max}")]
    NestingTooDeep { depth: usize, max: usize },
    #[error("mask is empty")]
    EmptyMask,
    #[error("base ratio {0} outside [0, 1]")]
    BadBaseRatio(f64),
    #[error("bad latent file: {0}")]
    BadLatentFile(String),
    #[error("denoiser failed: {0}")]
    Denoiser(#[from] DenoiseError),
}

/// What every denoising network must provide. Implementations must be
/// deterministic in their inputs and safe to share across threads.
pub trait Denoiser: Send + Sync {
    /// Predicted clean latent, same shape as `z_t`.
    fn predict_x0(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &CondEmbedding,
        schedule: &NoiseSchedule,
    ) -> Result<LatentGrid, DenoiseError>;

    /// The text encoder paired with this denoiser.
    fn embed(&self, text: &str) -> Result<CondEmbedding, DenoiseError> {
        embed_prompt(text)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_x0(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &CondEmbedding,
        schedule: &NoiseSchedule,
    ) -> Result<LatentGrid, DenoiseError> {
        (**self).predict_x0(z_t, t, cond, schedule)
    }

    fn embed(&self, text: &str) -> Result<CondEmbedding, DenoiseError> {
        (**self).embed(text)
    }
}

/// How region branches are shaped before they are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchGeometry {
    /// Each region branch denoises the region's own slice of `z_t` and is
    /// placed back unchanged.
    #[default]
    Crop,
    /// Each region branch denoises the full canvas and is then resized down
    /// to its region with the configured [`ResizeMode`].
    Resize,
}

impl FromStr for BranchGeometry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "crop" => Ok(BranchGeometry::Crop),
            "resize" => Ok(BranchGeometry::Resize),
            other => Err(format!("unknown branch geometry `{other}`")),
        }
    }
}

impl std::fmt::Display for BranchGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BranchGeometry::Crop => "crop",
            BranchGeometry::Resize => "resize",
        })
    }
}

pub const DEFAULT_MAX_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub steps: usize,
    /// Overrides the top-level plan's base ratio when set.
    pub base_ratio: Option<f64>,
    pub resize_mode: ResizeMode,
    pub geometry: BranchGeometry,
    pub max_depth: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            seed: 0,
            steps: 50,
            base_ratio: None,
            resize_mode: ResizeMode::Bilinear,
            geometry: BranchGeometry::Crop,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_base_ratio(mut self, beta: f64) -> Self {
        self.base_ratio = Some(beta);
        self
    }

    pub fn with_geometry(mut self, geometry: BranchGeometry) -> Self {
        self.geometry = geometry;
        self
    }

    /// The linear schedule for `steps`.
    pub fn schedule(&self) -> Result<NoiseSchedule, DiffusionError> {
        make_schedule(self.steps, ScheduleKind::Linear)
    }

    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<(), DiffusionError> {
        if self.steps == 0 {
            return Err(DiffusionError::BadStepCount(0));
        }
        if schedule.steps() != self.steps {
            return Err(DiffusionError::ScheduleMismatch { schedule: schedule.steps(), config: self.steps });
        }
        if let Some(b) = self.base_ratio {
            if !(0.0..=1.0).contains(&b) {
                return Err(DiffusionError::BadBaseRatio(b));
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseSource {
        NoiseSource::new(self.seed)
    }
}
