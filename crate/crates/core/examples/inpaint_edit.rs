//! Generates an image, then repaints one half with an edit plan. Cells
//! outside the edit mask come back bit for bit.
//!
//! ```text
//! cargo run --example inpaint_edit
//! cargo run --example inpaint_edit -- "del | a cool blue haze | 8,0,8,8 | background"
//! ```

use std::path::Path;

use rpg::denoisers::{oracle_caption, GmmDenoiser, GmmWorld};
use rpg::diffusion::{sample_crd, LatentShape, SamplerConfig};
use rpg::edit::{execute_plan, resolve_mask, EditPlan};
use rpg::layout::{parse_split, resolve_regions};
use rpg::planner::{PromptPlan, Subprompt};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let world: GmmWorld = std::fs::read_to_string(demo.join("world.gmm"))?.parse()?;
    let denoiser = GmmDenoiser::new(world.clone());
    let shape = LatentShape::new(8, 16, 3);
    let halves = resolve_regions(&parse_split("1,1")?, shape.canvas())?;
    let config = SamplerConfig::default().with_seed(21).with_steps(50);
    let schedule = config.schedule()?;

    let plan = PromptPlan::ordered(
        "cool everywhere",
        vec![Subprompt::new("left", "a cool blue haze"), Subprompt::new("right", "a cool blue haze")],
        parse_split("1,1")?,
        0.2,
    );
    let before = sample_crd(&plan, &denoiser, &schedule, &config, shape)?;
    println!("before: {:?}", oracle_caption(&before, &halves, &world)?);

    let text = std::env::args().nth(1).unwrap_or_else(|| "mod | a cool blue haze | 0,0,8,8 | a warm red glow".into());
    let edits: EditPlan = text.parse()?;
    let (after, log) = execute_plan(&edits, &before, &denoiser, &schedule, &config)?;
    for entry in &log {
        println!("op {}: {}  seed {:016x}", entry.index, entry.op, entry.seed);
    }
    println!("after:  {:?}", oracle_caption(&after, &halves, &world)?);

    let mut touched = vec![false; shape.height * shape.width];
    for op in &edits.ops {
        let mask = resolve_mask(&op.region, shape.canvas())?;
        touched.iter_mut().zip(mask.cells()).for_each(|(t, &m)| *t |= m);
    }
    let kept = (0..shape.height * shape.width)
        .filter(|&i| !touched[i])
        .all(|i| before.cell(i / shape.width, i % shape.width) == after.cell(i / shape.width, i % shape.width));
    println!("cells outside the masks unchanged: {kept}");
    Ok(())
}
