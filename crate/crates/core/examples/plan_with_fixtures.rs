//! Recaptions a prompt and plans its regions against the recorded fixture
//! store, so no model endpoint is needed.
//!
//! ```text
//! cargo run --example plan_with_fixtures
//! cargo run --example plan_with_fixtures -- "A green hair twintail in red blouse, wearing blue skirt."
//! ```
//!
//! Only prompts with recorded transcripts work; anything else reports a
//! fixture miss with the request digest.

use std::path::Path;

use rpg::layout::{resolve_regions, Canvas};
use rpg::planner::{format_plan_block, plan_regions, recaption, FixtureBackend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prompt = std::env::args().nth(1).unwrap_or_else(|| "warm on the left, cool on the right".into());
    let store = FixtureBackend::replay(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/store"));

    let rc = match recaption(&prompt, &store) {
        Ok(rc) => rc,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(3);
        }
    };
    println!("prompt: {}", rc.user_prompt);
    for s in &rc.subprompts {
        println!("  {:<10} -> {}", s.phrase, s.recaption);
    }

    // The demo transcripts were recorded against a 16x8 canvas, the others
    // against 16x16.
    let canvas = if prompt.starts_with("warm on the left") { Canvas::new(16, 8)? } else { Canvas::new(16, 16)? };
    let plan = plan_regions(&rc, &store, canvas)?;
    println!("\n{}", format_plan_block(&plan));
    let order = plan.region_subprompts().expect("validated plans are bijective");
    for (rect, sub) in resolve_regions(&plan.split, canvas)?.iter().zip(order) {
        println!("region {} at {}: {}", rect.index, rect, plan.subprompts[sub].recaption);
    }
    Ok(())
}
