//! The small cross-attention denoiser: attention weights for a prompt, a
//! finite-difference check of its analytic gradient, and a regional sample.
//!
//! ```text
//! cargo run --example attention_denoiser
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rpg::denoisers::{AttnConfig, AttnDenoiser};
use rpg::diffusion::{sample_crd, Denoiser, LatentGrid, LatentShape, SamplerConfig};
use rpg::layout::{parse_split, resolve_regions};
use rpg::planner::{PromptPlan, Subprompt};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let denoiser = AttnDenoiser::new(AttnConfig { dim: 8, channels: 3, tokens: 4, seed: 9 })?;
    let config = SamplerConfig::default().with_seed(1).with_steps(30);
    let schedule = config.schedule()?;
    let shape = LatentShape::new(2, 3, 3);
    let z = LatentGrid::standard_normal(shape, &mut ChaCha8Rng::seed_from_u64(2));
    let cond = denoiser.embed("a red kite")?;

    for (i, row) in denoiser.attention_weights(&z, 15, &cond)?.iter().enumerate() {
        let w: Vec<String> = row.iter().map(|w| format!("{w:.3}")).collect();
        println!("cell {i}: weights {}  sum {:.12}", w.join(" "), row.iter().sum::<f64>());
    }

    // d/dz of sum(forward) against central differences.
    let upstream = vec![1.0; z.data().len()];
    let grads = denoiser.backward(&z, 15, &cond, &upstream)?;
    let eps = 1e-3f32;
    let mut worst = 0.0f64;
    for i in 0..z.data().len() {
        // The latent is f32, so step by the offset that survives rounding.
        let bump = |d: f32| {
            let mut data = z.data().to_vec();
            data[i] += d;
            let step = data[i] as f64 - z.data()[i] as f64;
            let f = denoiser.forward(&LatentGrid::new(shape, data).unwrap(), 15, &cond).unwrap();
            (f.iter().sum::<f64>(), step)
        };
        let ((hi, up), (lo, down)) = (bump(eps), bump(-eps));
        let numeric = (hi - lo) / (up - down);
        worst = worst.max((numeric - grads.input[i]).abs());
    }
    println!("input gradient: worst |analytic - numeric| = {worst:.2e}");

    let plan = PromptPlan::ordered(
        "a kite over a lake",
        vec![Subprompt::new("kite", "a red kite"), Subprompt::new("lake", "a still lake")],
        parse_split("1;1")?,
        0.3,
    );
    let out_shape = LatentShape::new(8, 8, 3);
    let x = sample_crd(&plan, &denoiser, &schedule, &config, out_shape)?;
    for r in resolve_regions(&plan.split, out_shape.canvas())? {
        let m: Vec<String> = x.region_mean(&r).iter().map(|v| format!("{v:+.3}")).collect();
        println!("region {} ({}): mean {}", r.index, plan.subprompts[r.index].phrase, m.join(" "));
    }
    Ok(())
}
