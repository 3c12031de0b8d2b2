use std::collections::BTreeMap;

use super::{
    ddpm_step_with_noise, resize_latent, BranchGeometry, Denoiser, DiffusionError, LatentGrid, LatentShape,
    NoiseSchedule, SamplerConfig,
};
use crate::denoisers::{CondEmbedding, DenoiseError};
use crate::layout::{resolve_regions, validate_partition, Canvas, RegionRect};
use crate::planner::{validate_structure, PlanInvalid, PromptPlan};

/// Conditioning for every branch of a plan: the base prompt, one embedding
/// per region (in region order), and the same for nested plans.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanConds {
    pub base: CondEmbedding,
    pub regions: Vec<CondEmbedding>,
    pub nested: BTreeMap<usize, PlanConds>,
}

impl PlanConds {
    /// Embeds the base prompt and each region's recaptioned subprompt with
    /// the denoiser's text encoder.
    pub fn from_plan(plan: &PromptPlan, denoiser: &dyn Denoiser) -> Result<Self, DiffusionError> {
        let order =
            plan.region_subprompts().ok_or_else(|| PlanInvalid::AssignmentNotBijective(plan.assignment.clone()))?;
        let regions = order
            .iter()
            .map(|&sub| denoiser.embed(&plan.subprompts[sub].recaption))
            .collect::<Result<Vec<_>, DenoiseError>>()?;
        let nested = plan
            .nested
            .iter()
            .map(|(&r, p)| Ok((r, PlanConds::from_plan(p, denoiser)?)))
            .collect::<Result<_, DiffusionError>>()?;
        Ok(PlanConds { base: denoiser.embed(&plan.base_prompt)?, regions, nested })
    }
}

/// Intermediate latents of one regional step.
#[derive(Debug, Clone, PartialEq)]
pub struct CrdBranches {
    pub base: LatentGrid,
    pub regions: Vec<(RegionRect, LatentGrid)>,
    pub concatenated: LatentGrid,
}

/// Places each grid at its rectangle. The rectangles must tile `canvas`
/// exactly, so every output cell is copied from exactly one input.
pub fn concat_regions(placements: &[(RegionRect, LatentGrid)], canvas: Canvas) -> Result<LatentGrid, DiffusionError> {
    let rects: Vec<RegionRect> = placements.iter().map(|(r, _)| *r).collect();
    validate_partition(&rects, canvas)?;
    let channels = placements[0].1.channels();
    let mut out = LatentGrid::zeros(LatentShape::of_canvas(canvas, channels));
    for (rect, grid) in placements {
        out.paste(rect, grid)?;
    }
    Ok(out)
}

/// `beta * base + (1 - beta) * cat`, elementwise. The endpoints return the
/// corresponding input unchanged, and equal inputs blend to themselves.
pub fn blend(base: &LatentGrid, cat: &LatentGrid, beta: f64) -> Result<LatentGrid, DiffusionError> {
    cat.ensure_shape(base.shape())?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(DiffusionError::BadBaseRatio(beta));
    }
    if beta == 1.0 {
        return Ok(base.clone());
    }
    if beta == 0.0 {
        return Ok(cat.clone());
    }
    let data = base
        .data()
        .iter()
        .zip(cat.data())
        .map(|(&b, &c)| if b == c { b } else { (beta * b as f64 + (1.0 - beta) * c as f64) as f32 })
        .collect();
    LatentGrid::from_raw(base.shape(), data)
}

enum Branch<'a> {
    Leaf(&'a CondEmbedding),
    Nested(Box<Prepared<'a>>),
}

/// A plan with its layout resolved for a fixed canvas.
struct Prepared<'a> {
    rects: Vec<RegionRect>,
    base: &'a CondEmbedding,
    branches: Vec<Branch<'a>>,
    beta: f64,
}

fn prepare<'a>(
    plan: &PromptPlan,
    conds: &'a PlanConds,
    canvas: Canvas,
    beta: f64,
    geometry: BranchGeometry,
) -> Result<Prepared<'a>, DiffusionError> {
    let rects = resolve_regions(&plan.split, canvas)?;
    if rects.len() != conds.regions.len() {
        return Err(PlanInvalid::RegionCountMismatch { regions: rects.len(), subprompts: conds.regions.len() }.into());
    }
    let mut branches = Vec::with_capacity(rects.len());
    for (i, rect) in rects.iter().enumerate() {
        let branch = match (plan.nested.get(&i), conds.nested.get(&i)) {
            (Some(sub), Some(sub_conds)) => {
                let sub_canvas = match geometry {
                    BranchGeometry::Crop => rect.canvas(),
                    BranchGeometry::Resize => canvas,
                };
                Branch::Nested(Box::new(prepare(sub, sub_conds, sub_canvas, sub.base_ratio, geometry)?))
            }
            (None, None) => Branch::Leaf(&conds.regions[i]),
            _ => return Err(PlanInvalid::Other(format!("conditioning does not match nesting of region {i}")).into()),
        };
        branches.push(branch);
    }
    Ok(Prepared { rects, base: &conds.base, branches, beta })
}

struct StepCtx<'a> {
    denoiser: &'a dyn Denoiser,
    schedule: &'a NoiseSchedule,
    geometry: BranchGeometry,
    config: &'a SamplerConfig,
}

fn leaf_step(
    ctx: &StepCtx<'_>,
    z_t: &LatentGrid,
    t: usize,
    cond: &CondEmbedding,
    noise: &LatentGrid,
) -> Result<LatentGrid, DiffusionError> {
    let x0 = ctx.denoiser.predict_x0(z_t, t, cond, ctx.schedule)?;
    x0.ensure_shape(z_t.shape())?;
    ddpm_step_with_noise(z_t, t, &x0, ctx.schedule, noise)
}

fn step_prepared(
    ctx: &StepCtx<'_>,
    plan: &Prepared<'_>,
    z_t: &LatentGrid,
    t: usize,
    noise: &LatentGrid,
) -> Result<(LatentGrid, CrdBranches), DiffusionError> {
    let base = leaf_step(ctx, z_t, t, plan.base, noise)?;
    let mut regions = Vec::with_capacity(plan.rects.len());
    for (rect, branch) in plan.rects.iter().zip(&plan.branches) {
        let grid = match ctx.geometry {
            BranchGeometry::Crop => {
                let z = z_t.crop(rect)?;
                let n = noise.crop(rect)?;
                run_branch(ctx, branch, &z, t, &n)?
            }
            BranchGeometry::Resize => {
                let full = run_branch(ctx, branch, z_t, t, noise)?;
                resize_latent(&full, rect.w as usize, rect.h as usize, ctx.config.resize_mode)?
            }
        };
        regions.push((*rect, grid));
    }
    let concatenated = concat_regions(&regions, z_t.canvas())?;
    let out = blend(&base, &concatenated, plan.beta)?;
    Ok((out, CrdBranches { base, regions, concatenated }))
}

fn run_branch(
    ctx: &StepCtx<'_>,
    branch: &Branch<'_>,
    z_t: &LatentGrid,
    t: usize,
    noise: &LatentGrid,
) -> Result<LatentGrid, DiffusionError> {
    match branch {
        Branch::Leaf(cond) => leaf_step(ctx, z_t, t, cond, noise),
        Branch::Nested(sub) => Ok(step_prepared(ctx, sub, z_t, t, noise)?.0),
    }
}

fn top_beta(plan: &PromptPlan, config: &SamplerConfig) -> f64 {
    config.base_ratio.unwrap_or(plan.base_ratio)
}

fn check_plan(plan: &PromptPlan, config: &SamplerConfig, schedule: &NoiseSchedule) -> Result<(), DiffusionError> {
    config.validate(schedule)?;
    validate_structure(plan)?;
    let depth = plan.depth();
    if depth > config.max_depth {
        return Err(DiffusionError::NestingTooDeep { depth, max: config.max_depth });
    }
    Ok(())
}

/// One complementary regional diffusion step from `z_t` to `z_{t-1}`.
///
/// `noise` is the posterior noise for this step; the base branch and every
/// region branch use it (cropped to the region under
/// [`BranchGeometry::Crop`]), so blending never changes the noise scale.
#[allow(clippy::too_many_arguments)]
pub fn crd_step(
    z_t: &LatentGrid,
    plan: &PromptPlan,
    conds: &PlanConds,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    t: usize,
    config: &SamplerConfig,
    noise: &LatentGrid,
) -> Result<(LatentGrid, CrdBranches), DiffusionError> {
    noise.ensure_shape(z_t.shape())?;
    check_plan(plan, config, schedule)?;
    let prepared = prepare(plan, conds, z_t.canvas(), top_beta(plan, config), config.geometry)?;
    let ctx = StepCtx { denoiser, schedule, geometry: config.geometry, config };
    step_prepared(&ctx, &prepared, z_t, t, noise)
}

/// Regional sampling from `z_T` down to `z_0` for a flat plan. All branches
/// start from the same seeded `z_T`.
pub fn sample_crd(
    plan: &PromptPlan,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    shape: LatentShape,
) -> Result<LatentGrid, DiffusionError> {
    if !plan.nested.is_empty() {
        return Err(PlanInvalid::Other("plan has nested regions; use sample_hierarchical".into()).into());
    }
    sample_hierarchical(plan, denoiser, schedule, config, shape)
}

/// Regional sampling where regions with a nested plan are produced by a
/// regional step over that sub-plan, recursively, at every timestep.
pub fn sample_hierarchical(
    plan: &PromptPlan,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    shape: LatentShape,
) -> Result<LatentGrid, DiffusionError> {
    check_plan(plan, config, schedule)?;
    let conds = PlanConds::from_plan(plan, denoiser)?;
    let prepared = prepare(plan, &conds, shape.canvas(), top_beta(plan, config), config.geometry)?;
    let ctx = StepCtx { denoiser, schedule, geometry: config.geometry, config };
    let source = config.noise();
    let mut z = source.initial(shape);
    for t in (1..=schedule.steps()).rev() {
        let noise = source.step(t, shape);
        z = step_prepared(&ctx, &prepared, &z, t, &noise)?.0;
    }
    Ok(z)
}

/// Plain ancestral sampling under a single conditioning, with the same seed
/// and noise streams as the regional samplers.
pub fn sample_ddpm(
    cond: &CondEmbedding,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    shape: LatentShape,
) -> Result<LatentGrid, DiffusionError> {
    config.validate(schedule)?;
    let ctx = StepCtx { denoiser, schedule, geometry: config.geometry, config };
    let source = config.noise();
    let mut z = source.initial(shape);
    for t in (1..=schedule.steps()).rev() {
        let noise = source.step(t, shape);
        z = leaf_step(&ctx, &z, t, cond, &noise)?;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::embed_prompt;
    use crate::layout::parse_split;
    use crate::planner::Subprompt;

    /// Returns a constant grid whose value is looked up from the cond id.
    struct Sentinel;

    impl Denoiser for Sentinel {
        fn predict_x0(
            &self,
            z_t: &LatentGrid,
            _t: usize,
            cond: &CondEmbedding,
            _s: &NoiseSchedule,
        ) -> Result<LatentGrid, DenoiseError> {
            let v: f32 = cond.id.trim_start_matches('r').parse().unwrap_or(-1.0);
            Ok(LatentGrid::filled(z_t.shape(), v))
        }
    }

    fn plan(split: &str, beta: f64) -> PromptPlan {
        let spec = parse_split(split).unwrap();
        let subs = (0..spec.region_count()).map(|i| Subprompt::new(format!("r{i}"), format!("r{i}"))).collect();
        PromptPlan::ordered("base", subs, spec, beta)
    }

    fn setup() -> (NoiseSchedule, SamplerConfig, LatentShape) {
        let config = SamplerConfig::default().with_steps(1);
        (config.schedule().unwrap(), config, LatentShape::new(4, 6, 1))
    }

    #[test]
    fn sentinel_branches_route_to_their_regions() {
        let (s, config, shape) = setup();
        let p = plan("1,2;1,1,1", 0.0);
        let conds = PlanConds::from_plan(&p, &Sentinel).unwrap();
        let z = LatentGrid::zeros(shape);
        let (out, branches) = crd_step(&z, &p, &conds, &Sentinel, &s, 1, &config, &z).unwrap();
        let rects = resolve_regions(&p.split, shape.canvas()).unwrap();
        for r in &rects {
            for y in r.y0..r.y0 + r.h {
                for x in r.x0..r.x0 + r.w {
                    assert_eq!(out.get(y as usize, x as usize, 0), r.index as f32);
                }
            }
        }
        assert_eq!(branches.concatenated, out);
        assert!(branches.base.data().iter().all(|v| *v == -1.0));
    }

    #[test]
    fn blend_endpoints_select_branches() {
        let (s, config, shape) = setup();
        let z = LatentGrid::zeros(shape);
        for beta in [0.0, 1.0, 0.25] {
            let p = plan("1,1", beta);
            let conds = PlanConds::from_plan(&p, &Sentinel).unwrap();
            let (out, b) = crd_step(&z, &p, &conds, &Sentinel, &s, 1, &config, &z).unwrap();
            if beta == 1.0 {
                assert_eq!(out, b.base);
            } else if beta == 0.0 {
                assert_eq!(out, b.concatenated);
            } else {
                assert_eq!(out.get(0, 0, 0), -0.25 + 0.75 * 0.0);
                assert_eq!(out.get(0, 5, 0), -0.25 + 0.75 * 1.0);
            }
        }
    }

    #[test]
    fn config_override_beats_plan_ratio() {
        let (s, config, shape) = setup();
        let config = config.with_base_ratio(1.0);
        let p = plan("1,1", 0.0);
        let conds = PlanConds::from_plan(&p, &Sentinel).unwrap();
        let z = LatentGrid::zeros(shape);
        let (out, b) = crd_step(&z, &p, &conds, &Sentinel, &s, 1, &config, &z).unwrap();
        assert_eq!(out, b.base);
    }

    #[test]
    fn concat_rejects_gaps_and_bad_shapes() {
        let canvas = Canvas::new(4, 2).unwrap();
        let left = (RegionRect::new(0, 0, 2, 2, 0), LatentGrid::filled(LatentShape::new(2, 2, 1), 1.0));
        assert!(matches!(
            concat_regions(std::slice::from_ref(&left), canvas),
            Err(DiffusionError::PartitionViolation(_))
        ));
        let wrong = (RegionRect::new(2, 0, 2, 2, 1), LatentGrid::filled(LatentShape::new(1, 2, 1), 2.0));
        assert!(matches!(concat_regions(&[left, wrong], canvas), Err(DiffusionError::ShapeMismatch { .. })));
    }

    #[test]
    fn concat_places_constants() {
        let canvas = Canvas::new(4, 2).unwrap();
        let placements = vec![
            (RegionRect::new(0, 0, 2, 2, 0), LatentGrid::filled(LatentShape::new(2, 2, 1), 1.0)),
            (RegionRect::new(2, 0, 2, 2, 1), LatentGrid::filled(LatentShape::new(2, 2, 1), 2.0)),
        ];
        let out = concat_regions(&placements, canvas).unwrap();
        assert_eq!(out.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn blend_is_convex_within_an_ulp() {
        let shape = LatentShape::new(1, 3, 1);
        let a = LatentGrid::new(shape, vec![1.0, -3.0, 0.1]).unwrap();
        let b = LatentGrid::new(shape, vec![2.0, 5.0, 0.1]).unwrap();
        let out = blend(&a, &b, 0.3).unwrap();
        for i in 0..3 {
            let exact = 0.3 * a.data()[i] as f64 + 0.7 * b.data()[i] as f64;
            let ulp = f32::EPSILON as f64 * exact.abs().max(f32::MIN_POSITIVE as f64);
            assert!((out.data()[i] as f64 - exact).abs() <= ulp);
        }
        assert!(blend(&a, &b, 1.2).is_err());
    }

    #[test]
    fn depth_limit_enforced() {
        let (s, config, shape) = setup();
        let leaf = plan("1,1", 0.0);
        let deep =
            plan("1,1", 0.0).with_nested(0, plan("1,1", 0.0).with_nested(0, plan("1,1", 0.0).with_nested(0, leaf)));
        assert_eq!(deep.depth(), 4);
        assert_eq!(
            sample_hierarchical(&deep, &Sentinel, &s, &config, LatentShape::new(16, 16, 1)),
            Err(DiffusionError::NestingTooDeep { depth: 4, max: 3 })
        );
        let _ = shape;
    }

    #[test]
    fn sample_crd_rejects_nested_plans() {
        let (s, config, shape) = setup();
        let p = plan("1,1", 0.0).with_nested(1, plan("1", 0.0));
        assert!(matches!(sample_crd(&p, &Sentinel, &s, &config, shape), Err(DiffusionError::PlanInvalid(_))));
    }

    #[test]
    fn mismatched_schedule_rejected() {
        let (_, config, shape) = setup();
        let other = crate::diffusion::make_schedule(3, crate::diffusion::ScheduleKind::Linear).unwrap();
        let cond = embed_prompt("r0").unwrap();
        assert!(matches!(
            sample_ddpm(&cond, &Sentinel, &other, &config, shape),
            Err(DiffusionError::ScheduleMismatch { .. })
        ));
    }
}
