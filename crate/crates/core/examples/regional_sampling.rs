//! Samples a two-region plan with the mixture denoiser and shows how the
//! base ratio trades the base prompt against the regional prompts.
//!
//! ```text
//! cargo run --example regional_sampling -- out.png
//! ```

use std::path::Path;

use rpg::denoisers::{oracle_caption, GmmDenoiser, GmmWorld};
use rpg::diffusion::{sample_crd, sample_ddpm, Denoiser, LatentShape, SamplerConfig};
use rpg::layout::{parse_split, resolve_regions};
use rpg::pipeline::write_png;
use rpg::planner::{PromptPlan, Subprompt};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let world: GmmWorld = std::fs::read_to_string(demo.join("world.gmm"))?.parse()?;
    let denoiser = GmmDenoiser::new(world.clone());

    let shape = LatentShape::new(8, 16, 3);
    let regions = resolve_regions(&parse_split("1,1")?, shape.canvas())?;
    let config = SamplerConfig::default().with_seed(11).with_steps(50);
    let schedule = config.schedule()?;

    let plain = sample_ddpm(&denoiser.embed("a warm red glow")?, &denoiser, &schedule, &config, shape)?;
    println!("plain sampling, one prompt: {:?}", oracle_caption(&plain, &regions, &world)?);

    for beta in [0.0, 0.2, 0.6, 1.0] {
        let plan = PromptPlan::ordered(
            "warm on the left, cool on the right",
            vec![Subprompt::new("warm", "a warm red glow"), Subprompt::new("cool", "a cool blue haze")],
            parse_split("1,1")?,
            beta,
        );
        let z = sample_crd(&plan, &denoiser, &schedule, &config, shape)?;
        let means: Vec<String> = regions
            .iter()
            .map(|r| z.region_mean(r).iter().map(|m| format!("{m:+.2}")).collect::<Vec<_>>().join(" "))
            .collect();
        println!("beta {beta:.1}: {:?}  means [{}]", oracle_caption(&z, &regions, &world)?, means.join(" | "));
        if beta == 0.2 {
            if let Some(out) = std::env::args().nth(1) {
                write_png(Path::new(&out), &z, 16)?;
                println!("  wrote {out}");
            }
        }
    }
    Ok(())
}
