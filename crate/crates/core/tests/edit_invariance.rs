mod common;

use proptest::prelude::*;

use common::{gaussian, world};
use rpg::denoisers::GmmDenoiser;
use rpg::diffusion::{LatentGrid, LatentShape, NoiseSchedule, SamplerConfig};
use rpg::edit::{
    execute_plan, resolve_mask, run_closed_loop, EditKind, EditOp, EditPlan, EditPlanner, EditRegion, LoopConfig,
    OracleCaptioner,
};
use rpg::layout::{parse_split, resolve_regions, Canvas, RegionRect};

fn denoiser() -> GmmDenoiser {
    GmmDenoiser::new(world(&[
        ("a", gaussian(2.0, 0.1)),
        ("b", gaussian(-2.0, 0.1)),
        ("background", gaussian(0.0, 0.1)),
    ]))
}

fn canvas() -> Canvas {
    Canvas::new(8, 8).unwrap()
}

fn setup(seed: u64) -> (LatentGrid, NoiseSchedule, SamplerConfig) {
    let config = SamplerConfig::default().with_steps(10).with_seed(seed);
    let start = LatentGrid::filled(LatentShape::of_canvas(canvas(), 1), -2.0);
    (start, config.schedule().unwrap(), config)
}

fn rect_op(kind: EditKind, r: RegionRect, cond: &str) -> EditOp {
    EditOp::new(kind, cond, EditRegion::Rect(r), cond)
}

/// Ops over distinct cells of a 4x4 grid of 2x2 blocks, so every
/// pair of masks is disjoint.
fn disjoint_ops() -> impl Strategy<Value = Vec<EditOp>> {
    let cell = (0usize..16, prop::bool::ANY, 0usize..3);
    prop::collection::vec(cell, 1..6).prop_map(|cells| {
        let grid = resolve_regions(&parse_split("1,1,1,1;1,1,1,1;1,1,1,1;1,1,1,1").unwrap(), canvas()).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        cells
            .into_iter()
            .filter(|(i, _, _)| seen.insert(*i))
            .map(|(i, a, k)| {
                let kind = [EditKind::Add, EditKind::Del, EditKind::Mod][k];
                rect_op(kind, grid[i], if a { "a" } else { "background" })
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn disjoint_ops_commute(ops in disjoint_ops(), seed in 0u64..1000, rotate in 0usize..6) {
        let (start, s, c) = setup(seed);
        let d = denoiser();
        let mut shuffled = ops.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rotate % n);
        shuffled.reverse();
        let (a, _) = execute_plan(&EditPlan::new(ops), &start, &d, &s, &c).unwrap();
        let (b, _) = execute_plan(&EditPlan::new(shuffled), &start, &d, &s, &c).unwrap();
        prop_assert_eq!(a.to_rpgl_bytes(), b.to_rpgl_bytes());
    }

    #[test]
    fn each_op_only_touches_its_mask(ops in disjoint_ops(), seed in 0u64..1000) {
        let (start, s, c) = setup(seed);
        let d = denoiser();
        let plan = EditPlan::new(ops);
        let mut before = start.clone();
        let (_, log) = execute_plan(&plan, &start, &d, &s, &c).unwrap();
        for (entry, op) in log.iter().zip(&plan.ops) {
            prop_assert_eq!(&entry.before, &before.digest());
            let (after, _) = execute_plan(&EditPlan::new(vec![op.clone()]), &before, &d, &s, &c).unwrap();
            let mask = resolve_mask(&op.region, canvas()).unwrap();
            for y in 0..8 {
                for x in 0..8 {
                    if !mask.get(y, x) {
                        prop_assert_eq!(after.get(y, x, 0).to_bits(), before.get(y, x, 0).to_bits());
                    }
                }
            }
            prop_assert_eq!(&entry.after, &after.digest());
            before = after;
        }
    }

    #[test]
    fn loop_log_is_monotone(left in 0usize..3, right in 0usize..3, seed in 0u64..1000, max_rounds in 1usize..4) {
        let names = ["a", "b", "background"];
        let regions = resolve_regions(&parse_split("1,1").unwrap(), canvas()).unwrap();
        let targets = vec![names[left].to_string(), names[right].to_string()];
        let captioner = OracleCaptioner::new(denoiser().world().clone(), regions, targets, "background");
        let (start, s, c) = setup(seed);
        let lc = LoopConfig { max_rounds, background: "background".into(), sampler: c };
        let out = run_closed_loop(&start, &captioner, &EditPlanner::Rules, &denoiser(), &s, &lc).unwrap();

        prop_assert!(out.rounds.len() <= max_rounds);
        let mut digest = start.digest();
        for (i, round) in out.rounds.iter().enumerate() {
            prop_assert_eq!(round.round, i + 1);
            for op in &round.ops {
                prop_assert_eq!(&op.before, &digest);
                digest = op.after.clone();
            }
            prop_assert_eq!(&round.latent.digest(), &digest);
        }
        prop_assert_eq!(out.latent.digest(), digest);
        prop_assert_eq!(out.success(), out.remaining.is_empty());

        // Running again from a converged result does nothing.
        if out.success() {
            let again = run_closed_loop(&out.latent, &captioner, &EditPlanner::Rules, &denoiser(), &s, &lc).unwrap();
            prop_assert_eq!(again.rounds.len(), 1);
            prop_assert!(again.rounds[0].ops.is_empty());
            prop_assert_eq!(again.latent, out.latent);
        }
    }
}

#[test]
fn empty_plan_is_the_identity() {
    let (start, s, c) = setup(7);
    let (out, log) = execute_plan(&EditPlan::default(), &start, &denoiser(), &s, &c).unwrap();
    assert_eq!(out.to_rpgl_bytes(), start.to_rpgl_bytes());
    assert!(log.is_empty());
}

#[test]
fn overlapping_ops_do_not_commute() {
    let (start, s, c) = setup(3);
    let d = denoiser();
    let a = rect_op(EditKind::Mod, RegionRect::new(0, 0, 6, 6, 0), "a");
    let b = rect_op(EditKind::Del, RegionRect::new(2, 2, 6, 6, 0), "background");
    let (ab, _) = execute_plan(&EditPlan::new(vec![a.clone(), b.clone()]), &start, &d, &s, &c).unwrap();
    let (ba, _) = execute_plan(&EditPlan::new(vec![b, a]), &start, &d, &s, &c).unwrap();
    // The overlap holds whatever was painted last.
    assert!(ab.get(3, 3, 0) < 1.0);
    assert!(ba.get(3, 3, 0) > 1.0);
    assert_ne!(ab.to_rpgl_bytes(), ba.to_rpgl_bytes());
}
