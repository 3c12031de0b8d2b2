//! Runs the caption, plan and edit loop twice on the same start image:
//! once with the label oracle and rule-based planning, once with the chat
//! model replayed from recorded fixtures.
//!
//! ```text
//! cargo run --example closed_loop
//! ```

use std::path::Path;

use rpg::denoisers::{oracle_caption, GmmDenoiser, GmmWorld};
use rpg::diffusion::{sample_crd, LatentShape, SamplerConfig};
use rpg::edit::{run_closed_loop, EditPlanner, LoopConfig, LoopOutcome, MllmCaptioner, OracleCaptioner};
use rpg::layout::{parse_split, resolve_regions};
use rpg::planner::{FixtureBackend, PromptPlan, Subprompt};

fn report(name: &str, out: &LoopOutcome, world: &GmmWorld, regions: &[rpg::layout::RegionRect]) {
    println!("{name}: {:?} after {} rounds", out.status, out.rounds.len());
    for round in &out.rounds {
        println!("  round {}: {} discrepancies", round.round, round.discrepancies.len());
        for d in &round.discrepancies {
            println!("    found  {d}");
        }
        for op in &round.ops {
            println!("    edit   {}", op.op);
        }
    }
    println!("  final labels {:?}", oracle_caption(&out.latent, regions, world).unwrap());
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let world: GmmWorld = std::fs::read_to_string(root.join("demo/world.gmm"))?.parse()?;
    let denoiser = GmmDenoiser::new(world.clone());
    let shape = LatentShape::new(8, 16, 3);
    let regions = resolve_regions(&parse_split("1,1")?, shape.canvas())?;
    let config = SamplerConfig::default().with_seed(3).with_steps(50);
    let schedule = config.schedule()?;

    // Start from the wrong picture: cool on both sides.
    let start_plan = PromptPlan::ordered(
        "cool everywhere",
        vec![Subprompt::new("left", "a cool blue haze"), Subprompt::new("right", "a cool blue haze")],
        parse_split("1,1")?,
        0.2,
    );
    let start = sample_crd(&start_plan, &denoiser, &schedule, &config, shape)?;
    println!("start labels {:?}\n", oracle_caption(&start, &regions, &world)?);
    let loop_config = LoopConfig { max_rounds: 3, background: "background".into(), sampler: config.with_seed(4) };

    let targets = vec!["a warm red glow".to_string(), "a cool blue haze".to_string()];
    let oracle = OracleCaptioner::new(world.clone(), regions.clone(), targets, "background");
    let out = run_closed_loop(&start, &oracle, &EditPlanner::Rules, &denoiser, &schedule, &loop_config)?;
    report("oracle + rules", &out, &world, &regions);

    let store = FixtureBackend::replay(root.join("store"));
    let mllm = MllmCaptioner {
        backend: &store,
        target_prompt: "warm on the left, cool on the right".into(),
        world: world.clone(),
        regions: regions.clone(),
    };
    let out = run_closed_loop(&start, &mllm, &EditPlanner::Mllm(&store), &denoiser, &schedule, &loop_config)?;
    println!();
    report("recorded chat model", &out, &world, &regions);
    Ok(())
}
