//! Prompt recaptioning, region planning and edit planning through a chat
//! model.
//!
//! Every operation builds a message list from a versioned template, sends it
//! to an [`MllmBackend`] and parses the fenced block at the end of the reply.
//! The message builders are public so fixture stores can be authored ahead
//! of time.

pub mod authoring;
mod backend;
mod blocks;
mod edit_plan;
mod entities;
mod plan;

pub use backend::{
    message_digest, BackendError, ChatMessage, FixtureBackend, HttpBackend, HttpConfig, MllmBackend, Role,
};
pub use blocks::{
    fenced_blocks, format_discrepancies, format_plan_block, parse_edit_response, parse_entities_response,
    parse_plan_response, parse_recaption_response, EDIT_TAG, ENTITIES_TAG, PLAN_TAG, RECAPTION_TAG,
};
pub use edit_plan::{EditKind, EditOp, EditPlan, EditRegion};
pub use entities::{Discrepancy, DiscrepancyKind, EntityList, EntityReport};
pub use plan::{
    validate_plan, validate_structure, PlanInvalid, PromptPlan, RecaptionResult, Subprompt, DEFAULT_BASE_RATIO,
};

use thiserror::Error;

use crate::layout::{Canvas, RegionRect};

pub const RECAPTION_TEMPLATE: &str = include_str!("../../templates/recaption.txt");
pub const PLAN_TEMPLATE: &str = include_str!("../../templates/plan_regions.txt");
pub const ENTITIES_TEMPLATE: &str = include_str!("../../templates/caption_entities.txt");
pub const EDIT_TEMPLATE: &str = include_str!("../../templates/plan_edit.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable response: {reason}")]
    Unparseable { reason: String, raw: String },
    #[error("response contains no rpg-plan block")]
    NoPlanBlock,
    #[error("malformed plan block field `{0}`")]
    MalformedPlanBlock(String),
    #[error(transparent)]
    PlanInvalid(#[from] PlanInvalid),
}

pub fn recaption_messages(user_prompt: &str) -> Vec<ChatMessage> {
    vec![ChatMessage::system(RECAPTION_TEMPLATE), ChatMessage::user(format!("Request: {}", user_prompt.trim()))]
}

/// Splits the prompt into key phrases and enriches each.
pub fn recaption(user_prompt: &str, backend: &dyn MllmBackend) -> Result<RecaptionResult, PlannerError> {
    if user_prompt.trim().is_empty() {
        return Err(PlannerError::EmptyInput("prompt"));
    }
    let raw = backend.chat(&recaption_messages(user_prompt))?;
    let result =
        RecaptionResult { user_prompt: user_prompt.trim().to_string(), subprompts: parse_recaption_response(&raw)? };
    result.check().map_err(|reason| PlannerError::Unparseable { reason, raw })?;
    Ok(result)
}

pub fn plan_messages(recaption: &RecaptionResult, canvas: Canvas) -> Vec<ChatMessage> {
    let mut user = format!("Request: {}\nCanvas: {canvas}\nKey phrases:\n", recaption.user_prompt);
    for (i, s) in recaption.subprompts.iter().enumerate() {
        user.push_str(&format!("{i}|{}|{}\n", s.phrase, s.recaption));
    }
    vec![ChatMessage::system(PLAN_TEMPLATE), ChatMessage::user(user)]
}

/// Asks for a layout of the recaptioned phrases on `canvas`. The returned
/// plan always passes [`validate_plan`] and its base prompt is the user
/// prompt.
pub fn plan_regions(
    recaption: &RecaptionResult,
    backend: &dyn MllmBackend,
    canvas: Canvas,
) -> Result<PromptPlan, PlannerError> {
    recaption.check().map_err(PlanInvalid::Other)?;
    let raw = backend.chat(&plan_messages(recaption, canvas))?;
    let mut plan = parse_plan_response(&raw)?;
    plan.base_prompt = recaption.user_prompt.clone();
    validate_plan(&plan, canvas)?;
    let phrases = |subs: &[Subprompt]| subs.iter().map(|s| s.phrase.trim().to_lowercase()).collect::<Vec<_>>();
    let mut planned = phrases(&plan.subprompts);
    let mut asked = phrases(&recaption.subprompts);
    planned.sort();
    asked.sort();
    if planned != asked {
        return Err(PlanInvalid::Other("planned subprompts differ from the recaptioned phrases".into()).into());
    }
    Ok(plan)
}

pub fn entities_messages(caption: &str, target_prompt: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(ENTITIES_TEMPLATE),
        ChatMessage::user(format!("Request: {}\nCaption: {}", target_prompt.trim(), caption.trim())),
    ]
}

/// Compares a caption of the current image with the target prompt.
pub fn caption_entities(
    caption: &str,
    target_prompt: &str,
    backend: &dyn MllmBackend,
) -> Result<EntityReport, PlannerError> {
    if caption.trim().is_empty() {
        return Err(PlannerError::EmptyInput("caption"));
    }
    if target_prompt.trim().is_empty() {
        return Err(PlannerError::EmptyInput("target prompt"));
    }
    let raw = backend.chat(&entities_messages(caption, target_prompt))?;
    parse_entities_response(&raw)
}

pub fn edit_messages(discrepancies: &[Discrepancy], canvas: Canvas, background: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(EDIT_TEMPLATE),
        ChatMessage::user(format!(
            "Canvas: {canvas}\nBackground: {background}\nMismatches:\n{}",
            format_discrepancies(discrepancies)
        )),
    ]
}

fn op_kind_for(kind: DiscrepancyKind) -> EditKind {
    match kind {
        DiscrepancyKind::MissingEntity => EditKind::Add,
        DiscrepancyKind::RedundantEntity => EditKind::Del,
        DiscrepancyKind::AttributeMismatch | DiscrepancyKind::RelationshipMismatch => EditKind::Mod,
    }
}

/// The fixed mapping, one op per discrepancy: missing to add, redundant to
/// del, attribute or relationship to mod, ordered del, add, mod and stable
/// otherwise. Discrepancies without a region cover the whole canvas.
pub fn plan_edit_rules(discrepancies: &[Discrepancy], canvas: Canvas, background: &str) -> EditPlan {
    let mut ops: Vec<EditOp> = discrepancies
        .iter()
        .map(|d| {
            let kind = op_kind_for(d.kind);
            let cond = match kind {
                EditKind::Del => background.to_string(),
                EditKind::Add => d.entity.clone(),
                EditKind::Mod if d.detail.trim().is_empty() => d.entity.clone(),
                EditKind::Mod => d.detail.trim().to_string(),
            };
            let region = d.region.unwrap_or_else(|| RegionRect::full(canvas));
            EditOp::new(kind, d.entity.clone(), EditRegion::Rect(region), cond)
        })
        .collect();
    ops.sort_by_key(|op| op.kind);
    EditPlan::new(ops)
}

/// Asks the model for edit ops. An empty list needs no model call. Every
/// discrepancy must be answered by an op of the mapped kind on the same
/// entity; the model's ordering is kept.
pub fn plan_edit(
    discrepancies: &[Discrepancy],
    backend: &dyn MllmBackend,
    canvas: Canvas,
    background: &str,
) -> Result<EditPlan, PlannerError> {
    if discrepancies.is_empty() {
        return Ok(EditPlan::default());
    }
    let raw = backend.chat(&edit_messages(discrepancies, canvas, background))?;
    let plan = parse_edit_response(&raw)?;
    for d in discrepancies {
        let kind = op_kind_for(d.kind);
        let covered = plan
            .ops
            .iter()
            .any(|op| op.kind == kind && op.target.trim().to_lowercase() == d.entity.trim().to_lowercase());
        if !covered {
            return Err(PlanInvalid::Other(format!("no {kind} op answers discrepancy `{d}`")).into());
        }
    }
    Ok(plan)
}
