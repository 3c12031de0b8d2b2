use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::config::{BackendChoice, CaptionerChoice, DenoiserChoice, EditPlannerChoice, RunConfig, RunRecord};
use super::png::write_png;
use super::PipelineError;
use crate::denoisers::{AttnConfig, AttnDenoiser, GmmDenoiser, GmmWorld};
use crate::diffusion::{sample_hierarchical, Denoiser, LatentGrid, LatentShape};
use crate::edit::{
    execute_plan, run_closed_loop, Captioner, EditPlanner, EditRegion, LoopConfig, LoopOutcome, LoopStatus,
    MllmCaptioner, OpLogEntry, OracleCaptioner,
};
use crate::fsutil::write_atomic;
use crate::layout::{resolve_regions, Canvas};
use crate::planner::{
    format_plan_block, parse_plan_response, plan_regions, recaption, validate_plan, BackendError, ChatMessage,
    EditPlan, FixtureBackend, HttpBackend, MllmBackend, PlanInvalid, PromptPlan,
};

/// A request and its reply, or the error it failed with.
type Exchange = (Vec<ChatMessage>, Result<String, String>);

/// Passes calls through and keeps every request and reply.
pub struct TranscriptBackend<'a> {
    inner: &'a dyn MllmBackend,
    log: Mutex<Vec<Exchange>>,
}

impl<'a> TranscriptBackend<'a> {
    pub fn new(inner: &'a dyn MllmBackend) -> Self {
        TranscriptBackend { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for (i, (messages, reply)) in self.log.lock().unwrap_or_else(|e| e.into_inner()).iter().enumerate() {
            let _ = writeln!(out, "=== call {i} ({})", self.inner.name());
            for m in messages.iter().filter(|m| m.role != crate::planner::Role::System) {
                let _ = writeln!(out, "--- {}\n{}", m.role, m.content.trim_end());
            }
            match reply {
                Ok(r) => writeln!(out, "--- reply\n{}", r.trim_end()),
                Err(e) => writeln!(out, "--- error\n{e}"),
            }
            .ok();
        }
        out
    }
}

impl MllmBackend for TranscriptBackend<'_> {
    fn chat(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let reply = self.inner.chat(messages);
        let logged = reply.clone().map_err(|e| e.to_string());
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push((messages.to_vec(), logged));
        reply
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

pub fn build_backend(config: &RunConfig) -> Result<Box<dyn MllmBackend>, PipelineError> {
    let http = || HttpBackend::new(config.http.clone()).map_err(|e| PipelineError::Planner(e.into()));
    Ok(match config.backend {
        BackendChoice::Http => Box::new(http()?),
        BackendChoice::Fixtures => {
            let dir = config
                .fixtures
                .clone()
                .ok_or_else(|| PipelineError::Usage("the fixtures backend needs --fixtures DIR".into()))?;
            if config.record {
                Box::new(FixtureBackend::record(dir, Arc::new(http()?)))
            } else {
                if !dir.is_dir() {
                    return Err(PipelineError::Usage(format!("fixture directory {} does not exist", dir.display())));
                }
                Box::new(FixtureBackend::replay(dir))
            }
        }
    })
}

pub fn load_world(path: &Path) -> Result<GmmWorld, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.parse::<GmmWorld>().map_err(|e| PipelineError::Parse(format!("{}: {e}", path.display())))
}

fn config_world(config: &RunConfig) -> Result<GmmWorld, PipelineError> {
    let path = config.world.as_ref().ok_or_else(|| PipelineError::Usage("this needs a `world` file".into()))?;
    load_world(path)
}

pub fn build_denoiser(config: &RunConfig) -> Result<Box<dyn Denoiser>, PipelineError> {
    Ok(match config.denoiser {
        DenoiserChoice::Gmm => Box::new(GmmDenoiser::new(config_world(config)?)),
        DenoiserChoice::Attn => Box::new(AttnDenoiser::new(AttnConfig {
            dim: config.attn_dim,
            channels: config.channels,
            tokens: config.attn_tokens,
            seed: config.attn_seed,
        })?),
    })
}

/// Reads an `rpg-plan` file; a missing `base_prompt` is an error here.
pub fn load_plan_file(path: &Path) -> Result<PromptPlan, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(parse_plan_response(&text)?)
}

/// One line per region: index, rectangle, subprompt phrase.
pub fn region_table(plan: &PromptPlan, canvas: Canvas) -> Result<String, PipelineError> {
    let rects =
        resolve_regions(&plan.split, canvas).map_err(|e| PipelineError::Planner(PlanInvalid::from(e).into()))?;
    let order = plan
        .region_subprompts()
        .ok_or_else(|| PipelineError::Planner(PlanInvalid::AssignmentNotBijective(plan.assignment.clone()).into()))?;
    let mut out = format!("{:<7} {:<14} {}\n", "region", "x0,y0,w,h", "subprompt");
    for (rect, sub) in rects.iter().zip(order) {
        let _ = writeln!(out, "{:<7} {:<14} {}", rect.index, rect.to_string(), plan.subprompts[sub].phrase);
    }
    let _ = writeln!(out, "base_ratio {}", plan.base_ratio);
    Ok(out)
}

#[derive(Debug, Default)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub stdout: String,
    pub warning: Option<String>,
    pub record: Option<RunRecord>,
}

fn write_file(path: &Path, bytes: &[u8], out: &mut CommandOutput) -> Result<(), PipelineError> {
    write_atomic(path, bytes).map_err(|e| PipelineError::io(path, e))?;
    out.files.push(path.to_path_buf());
    Ok(())
}

fn write_latent(path: &Path, grid: &LatentGrid, scale: u32, out: &mut CommandOutput) -> Result<(), PipelineError> {
    write_file(path, &grid.to_rpgl_bytes(), out)?;
    let png = path.with_extension("png");
    write_png(&png, grid, scale).map_err(|e| PipelineError::io(&png, e))?;
    out.files.push(png);
    Ok(())
}

fn read_latent(path: &Path) -> Result<LatentGrid, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(LatentGrid::from_rpgl_bytes(&bytes)?)
}

fn prepare_out(config: &RunConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&config.out).map_err(|e| PipelineError::io(&config.out, e))
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn require_prompt(config: &RunConfig) -> Result<&str, PipelineError> {
    match config.prompt.as_deref().map(str::trim) {
        Some(p) if !p.is_empty() => Ok(p),
        _ => Err(PipelineError::Usage("a non-empty --prompt is required".into())),
    }
}

fn plan_prompt(prompt: &str, config: &RunConfig, out: &mut CommandOutput) -> Result<PromptPlan, PipelineError> {
    let backend = build_backend(config)?;
    let transcript = TranscriptBackend::new(backend.as_ref());
    let result = recaption(prompt, &transcript).and_then(|rc| plan_regions(&rc, &transcript, config.canvas));
    write_file(&config.out.join("plan.log"), transcript.text().as_bytes(), out)?;
    let plan = result?;
    write_file(&config.out.join("plan.rpg"), format_plan_block(&plan).as_bytes(), out)?;
    Ok(plan)
}

/// Recaptions and plans `config.prompt`; writes `plan.rpg` and the
/// request/reply transcript `plan.log`.
pub fn cmd_plan(config: &RunConfig) -> Result<CommandOutput, PipelineError> {
    let prompt = require_prompt(config)?;
    config.validate()?;
    prepare_out(config)?;
    let mut out = CommandOutput::default();
    let plan = plan_prompt(prompt, config, &mut out)?;
    out.stdout = region_table(&plan, config.canvas)?;
    Ok(out)
}

fn obtain_plan(config: &RunConfig, out: &mut CommandOutput) -> Result<PromptPlan, PipelineError> {
    let plan = match &config.plan {
        Some(path) => load_plan_file(path)?,
        None => plan_prompt(require_prompt(config)?, config, out)?,
    };
    validate_plan(&plan, config.canvas).map_err(|e| PipelineError::Planner(e.into()))?;
    Ok(plan)
}

fn generate_latent(
    config: &RunConfig,
    plan: &PromptPlan,
    denoiser: &dyn Denoiser,
) -> Result<LatentGrid, PipelineError> {
    let schedule = config.sampler.schedule()?;
    let shape = LatentShape::of_canvas(config.canvas, config.channels);
    Ok(sample_hierarchical(plan, denoiser, &schedule, &config.sampler, shape)?)
}

/// Samples the plan (from `--plan` or planned from `--prompt`) and writes
/// `latent.rpgl`, `latent.png` and `record.txt`.
pub fn cmd_generate(config: &RunConfig) -> Result<CommandOutput, PipelineError> {
    if config.plan.is_none() {
        require_prompt(config)?;
    }
    config.validate()?;
    let denoiser = build_denoiser(config)?;
    prepare_out(config)?;
    let mut out = CommandOutput::default();
    let plan = obtain_plan(config, &mut out)?;
    let latent = generate_latent(config, &plan, denoiser.as_ref())?;
    let path = config.out.join("latent.rpgl");
    write_latent(&path, &latent, config.png_scale, &mut out)?;

    let mut record = RunRecord::new(config);
    record.set("command", "generate");
    record.set("plan_digest", digest(format_plan_block(&plan).as_bytes()));
    record.set("latent", std::path::absolute(&path).unwrap_or(path.clone()).display().to_string());
    record.set("latent_digest", latent.digest());
    write_file(&config.out.join("record.txt"), record.to_text().as_bytes(), &mut out)?;
    out.stdout = region_table(&plan, config.canvas)?;
    let _ = writeln!(out.stdout, "latent {} ({})", path.display(), latent.digest());
    out.record = Some(record);
    Ok(out)
}

fn op_log(entries: &[OpLogEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("op {} | {} | seed {} | before {} | after {}\n", e.index, e.op, e.seed, e.before, e.after))
        .collect()
}

/// Reads an edit plan file; relative mask paths are taken relative to it.
fn load_edit_plan(path: &Path) -> Result<EditPlan, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut plan: EditPlan = text.parse().map_err(|e: PlanInvalid| PipelineError::Planner(e.into()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for op in &mut plan.ops {
        if let EditRegion::MaskFile(p) = &mut op.region {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(plan)
}

/// Applies the edit plan `config.edits` to `config.latent`; writes
/// `edited.rpgl`, `edited.png`, `edits.log` and `record.txt`.
pub fn cmd_edit(config: &RunConfig) -> Result<CommandOutput, PipelineError> {
    let latent_path = config.latent.as_ref().ok_or_else(|| PipelineError::Usage("edit needs --latent FILE".into()))?;
    let edits_path = config.edits.as_ref().ok_or_else(|| PipelineError::Usage("edit needs --plan EDITS".into()))?;
    config.validate()?;
    let denoiser = build_denoiser(config)?;
    let source = read_latent(latent_path)?;
    let plan = load_edit_plan(edits_path)?;
    prepare_out(config)?;
    let mut out = CommandOutput::default();
    let schedule = config.sampler.schedule()?;
    let (edited, log) = execute_plan(&plan, &source, denoiser.as_ref(), &schedule, &config.sampler)?;
    let path = config.out.join("edited.rpgl");
    write_latent(&path, &edited, config.png_scale, &mut out)?;
    write_file(&config.out.join("edits.log"), op_log(&log).as_bytes(), &mut out)?;

    let mut record = RunRecord::new(config);
    record.set("command", "edit");
    record.set("source_digest", source.digest());
    record.set("latent", std::path::absolute(&path).unwrap_or(path.clone()).display().to_string());
    record.set("latent_digest", edited.digest());
    write_file(&config.out.join("record.txt"), record.to_text().as_bytes(), &mut out)?;
    out.stdout = format!("{} ops applied\nlatent {} ({})\n", log.len(), path.display(), edited.digest());
    out.record = Some(record);
    Ok(out)
}

/// The round log: one `round` line per round, then its discrepancies and
/// ops indented, then a `status` line.
pub fn round_log(outcome: &LoopOutcome) -> String {
    let mut out = String::new();
    for r in &outcome.rounds {
        let _ = writeln!(
            out,
            "round {} | discrepancies {} | ops {} | latent {}",
            r.round,
            r.discrepancies.len(),
            r.ops.len(),
            r.latent.digest()
        );
        for d in &r.discrepancies {
            let _ = writeln!(out, "  discrepancy {d}");
        }
        for line in op_log(&r.ops).lines() {
            let _ = writeln!(out, "  {line}");
        }
    }
    for d in &outcome.remaining {
        let _ = writeln!(out, "remaining {d}");
    }
    let _ = writeln!(
        out,
        "status {}",
        match outcome.status {
            LoopStatus::Converged => "converged",
            LoopStatus::MaxRoundsExceeded => "max-rounds-exceeded",
        }
    );
    out
}

/// Generates from the plan, then refines in closed loop. Writes
/// `initial.rpgl`, `final.rpgl` (with PNGs), `rounds.txt` and `record.txt`.
/// Running out of rounds is reported as a warning, not an error.
pub fn cmd_loop(config: &RunConfig) -> Result<CommandOutput, PipelineError> {
    if config.plan.is_none() {
        require_prompt(config)?;
    }
    config.validate()?;
    let world = config_world(config)?;
    let denoiser = build_denoiser(config)?;
    prepare_out(config)?;
    let mut out = CommandOutput::default();
    let plan = obtain_plan(config, &mut out)?;
    let initial = generate_latent(config, &plan, denoiser.as_ref())?;
    write_latent(&config.out.join("initial.rpgl"), &initial, config.png_scale, &mut out)?;

    let regions =
        resolve_regions(&plan.split, config.canvas).map_err(|e| PipelineError::Planner(PlanInvalid::from(e).into()))?;
    let order = plan.region_subprompts().expect("validated plan");
    let target_prompt = config.prompt.clone().unwrap_or_else(|| plan.base_prompt.clone());
    let needs_backend = config.captioner == CaptionerChoice::Mllm || config.edit_planner == EditPlannerChoice::Mllm;
    let backend = if needs_backend { Some(build_backend(config)?) } else { None };
    let transcript = backend.as_ref().map(|b| TranscriptBackend::new(b.as_ref()));

    let captioner: Box<dyn Captioner + '_> = match config.captioner {
        CaptionerChoice::Oracle => {
            let targets = order.iter().map(|&s| plan.subprompts[s].recaption.clone()).collect();
            Box::new(OracleCaptioner::new(world, regions, targets, config.background.as_str()))
        }
        CaptionerChoice::Mllm => Box::new(MllmCaptioner {
            backend: transcript.as_ref().expect("backend built"),
            target_prompt,
            world,
            regions,
        }),
    };
    let planner = match config.edit_planner {
        EditPlannerChoice::Rules => EditPlanner::Rules,
        EditPlannerChoice::Mllm => EditPlanner::Mllm(transcript.as_ref().expect("backend built")),
    };
    let loop_config = LoopConfig {
        max_rounds: config.max_rounds,
        background: config.background.clone(),
        sampler: config.sampler.clone(),
    };
    let schedule = config.sampler.schedule()?;
    let result = run_closed_loop(&initial, captioner.as_ref(), &planner, denoiser.as_ref(), &schedule, &loop_config);
    if let Some(t) = &transcript {
        write_file(&config.out.join("loop.log"), t.text().as_bytes(), &mut out)?;
    }
    let outcome = result?;

    let path = config.out.join("final.rpgl");
    write_latent(&path, &outcome.latent, config.png_scale, &mut out)?;
    let log = round_log(&outcome);
    write_file(&config.out.join("rounds.txt"), log.as_bytes(), &mut out)?;

    let mut record = RunRecord::new(config);
    record.set("command", "loop");
    record.set("plan_digest", digest(format_plan_block(&plan).as_bytes()));
    record.set("initial_digest", initial.digest());
    record.set("latent", std::path::absolute(&path).unwrap_or(path.clone()).display().to_string());
    record.set("latent_digest", outcome.latent.digest());
    record.set("rounds", outcome.rounds.len().to_string());
    record.set("status", if outcome.success() { "converged" } else { "max-rounds-exceeded" });
    write_file(&config.out.join("record.txt"), record.to_text().as_bytes(), &mut out)?;

    out.stdout = log;
    if !outcome.success() {
        out.warning = Some(format!(
            "stopped after {} rounds with {} discrepancies left",
            outcome.rounds.len(),
            outcome.remaining.len()
        ));
    }
    out.record = Some(record);
    Ok(out)
}

/// Re-runs the command of a run record into `out_dir` and reports whether
/// the final latent digest matches the recorded one.
pub fn replay_record(record_path: &Path, out_dir: &Path) -> Result<bool, PipelineError> {
    let text = std::fs::read_to_string(record_path).map_err(|e| PipelineError::io(record_path, e))?;
    let record = RunRecord::parse(&text)?;
    let mut config = record.config.clone();
    config.out = out_dir.to_path_buf();
    let output = match record.get("command") {
        Some("generate") => cmd_generate(&config)?,
        Some("edit") => cmd_edit(&config)?,
        Some("loop") => cmd_loop(&config)?,
        other => return Err(PipelineError::Parse(format!("record has no replayable command: {other:?}"))),
    };
    let expected =
        record.get("latent_digest").ok_or_else(|| PipelineError::Parse("record lacks latent_digest".into()))?;
    let got = output.record.as_ref().and_then(|r| r.get("latent_digest").map(str::to_string));
    Ok(got.as_deref() == Some(expected))
}
