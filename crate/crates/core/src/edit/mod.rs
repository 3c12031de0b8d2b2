//! Mask-based editing and closed-loop refinement.
//!
//! An [`EditPlan`] is executed op by op, each op re-generating only the cells
//! of its mask with [`sample_inpaint`]. [`run_closed_loop`] alternates
//! captioning, planning and execution until the image agrees with the target
//! or the round budget is spent.

mod closed_loop;

pub use crate::diffusion::Mask;
pub use crate::planner::{EditKind, EditOp, EditPlan, EditRegion};
pub use closed_loop::{
    describe_regions, run_closed_loop, Captioner, EditPlanner, LoopConfig, LoopOutcome, LoopStatus, MllmCaptioner,
    OracleCaptioner, RoundState, DEFAULT_MAX_ROUNDS,
};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diffusion::{sample_inpaint, Denoiser, DiffusionError, LatentGrid, NoiseSchedule, SamplerConfig};
use crate::layout::{Canvas, PartitionViolation, RegionRect};
use crate::planner::PlannerError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EditError {
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("regions do not partition the latent: {0}")]
    Regions(#[from] PartitionViolation),
    #[error("mask file {path}: {reason}")]
    MaskFile { path: String, reason: String },
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error("{0}")]
    Config(String),
}

/// Ones inside `rect`, zeros elsewhere.
pub fn mask_from_region(rect: &RegionRect, canvas: Canvas) -> Result<Mask, DiffusionError> {
    Mask::from_rect(rect, canvas)
}

/// The mask an op addresses. Mask files are read as single-channel RPGL.
pub fn resolve_mask(region: &EditRegion, canvas: Canvas) -> Result<Mask, EditError> {
    match region {
        EditRegion::Rect(r) => Ok(mask_from_region(r, canvas)?),
        EditRegion::MaskFile(path) => {
            let err = |reason: String| EditError::MaskFile { path: path.display().to_string(), reason };
            let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
            let grid = LatentGrid::read_rpgl(std::io::BufReader::new(file)).map_err(|e| err(e.to_string()))?;
            let mask = Mask::from_latent(&grid).map_err(|e| err(e.to_string()))?;
            if mask.canvas() != canvas {
                return Err(err(format!("mask is {} but the latent is {canvas}", mask.canvas())));
            }
            Ok(mask)
        }
    }
}

/// Mixes `seed` with `parts` into a fresh seed.
pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Inpaints the op's mask with its conditioning; everything outside the mask
/// is returned bit-identical. The noise seed is `config.seed` as given.
pub fn apply_op(
    op: &EditOp,
    latent_x0: &LatentGrid,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
) -> Result<LatentGrid, EditError> {
    let mask = resolve_mask(&op.region, latent_x0.canvas())?;
    let cond = denoiser.embed(&op.cond).map_err(DiffusionError::from)?;
    Ok(sample_inpaint(latent_x0, &mask, &cond, denoiser, schedule, config)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpLogEntry {
    pub index: usize,
    pub op: EditOp,
    pub seed: u64,
    pub before: String,
    pub after: String,
}

/// Applies the ops in order. Each op's noise seed is derived from
/// `config.seed` and the op's text, so reordering ops whose masks are
/// disjoint gives the same result for per-cell denoisers.
pub fn execute_plan(
    plan: &EditPlan,
    latent_x0: &LatentGrid,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
) -> Result<(LatentGrid, Vec<OpLogEntry>), EditError> {
    let mut current = latent_x0.clone();
    let mut log = Vec::with_capacity(plan.len());
    for (index, op) in plan.ops.iter().enumerate() {
        let seed = derive_seed(config.seed, &[b"edit-op", op.to_string().as_bytes()]);
        let before = current.digest();
        current = apply_op(op, &current, denoiser, schedule, &config.clone().with_seed(seed))?;
        log.push(OpLogEntry { index, op: op.clone(), seed, before, after: current.digest() });
    }
    Ok((current, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::{CondMixture, GmmDenoiser, GmmWorld, Mixture1d};
    use crate::diffusion::LatentShape;

    fn denoiser() -> GmmDenoiser {
        GmmDenoiser::new(
            GmmWorld::new()
                .with("a", CondMixture::uniform(Mixture1d::gaussian(2.0, 0.05)))
                .with("bg", CondMixture::uniform(Mixture1d::gaussian(0.0, 0.05))),
        )
    }

    fn setup() -> (LatentGrid, NoiseSchedule, SamplerConfig) {
        let config = SamplerConfig::default().with_steps(20).with_seed(4);
        let x = LatentGrid::filled(LatentShape::new(4, 4, 1), -2.0);
        (x, config.schedule().unwrap(), config)
    }

    #[test]
    fn empty_plan_is_identity() {
        let (x, s, c) = setup();
        let (out, log) = execute_plan(&EditPlan::default(), &x, &denoiser(), &s, &c).unwrap();
        assert_eq!(out, x);
        assert!(log.is_empty());
    }

    #[test]
    fn op_is_local_and_logged() {
        let (x, s, c) = setup();
        let op = EditOp::new(EditKind::Add, "a", EditRegion::Rect(RegionRect::new(0, 0, 2, 2, 0)), "a");
        let (out, log) = execute_plan(&EditPlan::new(vec![op]), &x, &denoiser(), &s, &c).unwrap();
        for y in 0..4 {
            for xx in 0..4 {
                if y >= 2 || xx >= 2 {
                    assert_eq!(out.get(y, xx, 0), -2.0);
                } else {
                    assert!(out.get(y, xx, 0) > 1.0);
                }
            }
        }
        assert_eq!(log[0].before, x.digest());
        assert_eq!(log[0].after, out.digest());
    }

    #[test]
    fn missing_mask_file_and_unknown_cond() {
        let (x, s, c) = setup();
        let op = EditOp::new(EditKind::Mod, "a", EditRegion::MaskFile("/nonexistent/m.rpgl".into()), "a");
        assert!(matches!(apply_op(&op, &x, &denoiser(), &s, &c), Err(EditError::MaskFile { .. })));
        let op = EditOp::new(EditKind::Mod, "a", EditRegion::Rect(RegionRect::new(0, 0, 1, 1, 0)), "zebra");
        assert!(matches!(
            apply_op(&op, &x, &denoiser(), &s, &c),
            Err(EditError::Diffusion(DiffusionError::Denoiser(_)))
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[b"a"]), derive_seed(1, &[b"b"]));
        assert_ne!(derive_seed(1, &[b"ab"]), derive_seed(1, &[b"a", b"b"]));
        assert_eq!(derive_seed(9, &[b"x"]), derive_seed(9, &[b"x"]));
    }
}
