//! Nests a left/right plan inside the bottom row of a two-row plan and
//! compares it with the flat three-region layout.
//!
//! ```text
//! cargo run --example hierarchical
//! ```

use std::path::Path;

use rpg::denoisers::{oracle_caption, GmmDenoiser, GmmWorld};
use rpg::diffusion::{sample_crd, sample_hierarchical, LatentShape, SamplerConfig};
use rpg::layout::{parse_split, parse_split_extended, resolve_regions};
use rpg::planner::{format_plan_block, PromptPlan, Subprompt};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let world: GmmWorld = std::fs::read_to_string(demo.join("world.gmm"))?.parse()?;
    let denoiser = GmmDenoiser::new(world.clone());
    let shape = LatentShape::new(16, 16, 3);
    let config = SamplerConfig::default().with_seed(5).with_steps(50);
    let schedule = config.schedule()?;

    let bottom = PromptPlan::ordered(
        "warm and cool",
        vec![Subprompt::new("warm", "a warm red glow"), Subprompt::new("cool", "a cool blue haze")],
        parse_split("1,1")?,
        0.2,
    );
    let nested = PromptPlan::ordered(
        "a meadow over warm and cool",
        vec![Subprompt::new("meadow", "a pale green meadow"), Subprompt::new("lower half", "warm and cool")],
        parse_split("1;1")?,
        0.2,
    )
    .with_nested(1, bottom);
    println!("{}", format_plan_block(&nested));

    let z = sample_hierarchical(&nested, &denoiser, &schedule, &config, shape)?;
    let leaves = resolve_regions(&parse_split_extended("1;1,1")?, shape.canvas())?;
    println!("nested: {:?}", oracle_caption(&z, &leaves, &world)?);

    // The same leaves as one flat plan.
    let flat = PromptPlan::ordered(
        "a meadow over warm and cool",
        vec![
            Subprompt::new("meadow", "a pale green meadow"),
            Subprompt::new("warm", "a warm red glow"),
            Subprompt::new("cool", "a cool blue haze"),
        ],
        parse_split("1;1,1")?,
        0.2,
    );
    let f = sample_crd(&flat, &denoiser, &schedule, &config, shape)?;
    println!("flat:   {:?}", oracle_caption(&f, &leaves, &world)?);
    for (r, name) in leaves.iter().zip(["meadow", "warm", "cool"]) {
        let (a, b) = (z.region_mean(r), f.region_mean(r));
        println!(
            "  {name:<6} nested {:+.2} {:+.2} {:+.2}  flat {:+.2} {:+.2} {:+.2}",
            a[0], a[1], a[2], b[0], b[1], b[2]
        );
    }
    Ok(())
}
