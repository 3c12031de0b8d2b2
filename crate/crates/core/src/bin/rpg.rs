use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpg::pipeline::{cmd_edit, cmd_generate, cmd_loop, cmd_plan, PipelineError, RunConfig, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "rpg", version, about = "Plan, generate and edit region-composed latents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recaption a prompt and plan its regions.
    Plan(Common),
    /// Sample a latent from a plan file or a prompt.
    Generate(Common),
    /// Apply an edit plan (--plan) to a latent (--latent).
    Edit(Common),
    /// Generate, then caption, re-plan and edit until the target is met.
    Loop(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    prompt: Option<String>,
    /// Region plan file, or the edit plan for `edit`.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    latent: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long = "base-ratio")]
    base_ratio: Option<f64>,
    /// WxH in latent cells.
    #[arg(long)]
    canvas: Option<String>,
    #[arg(long, value_parser = ["http", "fixtures"])]
    backend: Option<String>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long = "max-rounds")]
    max_rounds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(args: &Common, edit: bool) -> Result<RunConfig, PipelineError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let path = |p: &PathBuf| p.display().to_string();
    let overrides = [
        ("prompt", args.prompt.clone()),
        (if edit { "edits" } else { "plan" }, args.plan.as_ref().map(path)),
        ("latent", args.latent.as_ref().map(path)),
        ("seed", args.seed.map(|v| v.to_string())),
        ("steps", args.steps.map(|v| v.to_string())),
        ("base_ratio", args.base_ratio.map(|v| v.to_string())),
        ("canvas", args.canvas.clone()),
        ("backend", args.backend.clone()),
        ("fixtures", args.fixtures.as_ref().map(path)),
        ("max_rounds", args.max_rounds.map(|v| v.to_string())),
        ("out", args.out.as_ref().map(path)),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Plan(a) => build_config(a, false).and_then(|c| cmd_plan(&c)),
        Command::Generate(a) => build_config(a, false).and_then(|c| cmd_generate(&c)),
        Command::Edit(a) => build_config(a, true).and_then(|c| cmd_edit(&c)),
        Command::Loop(a) => build_config(a, false).and_then(|c| cmd_loop(&c)),
    };
    match result {
        Ok(output) => {
            print!("{}", output.stdout);
            if let Some(w) = output.warning {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
