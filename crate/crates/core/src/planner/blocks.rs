//! Fenced, line-oriented blocks that model responses must end with.
//!
//! Only the inside of a block tagged with the expected name is read, so the
//! free-form reasoning around it never affects the result.

use std::collections::BTreeMap;

use super::{
    Discrepancy, EditOp, EditPlan, EntityList, EntityReport, PlannerError, PromptPlan, Subprompt, DEFAULT_BASE_RATIO,
};
use crate::layout::{parse_split_extended, serialize_split};

pub const PLAN_TAG: &str = "rpg-plan";
pub const RECAPTION_TAG: &str = "rpg-recaption";
pub const ENTITIES_TAG: &str = "rpg-entities";
pub const EDIT_TAG: &str = "rpg-edit";

/// Bodies of every closed block opened by ```` ```tag ````, in order.
pub fn fenced_blocks<'a>(text: &'a str, tag: &str) -> Vec<Vec<&'a str>> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        match current.as_mut() {
            None => {
                if trimmed.strip_prefix("```").map(str::trim) == Some(tag) {
                    current = Some(Vec::new());
                }
            }
            Some(body) => {
                if trimmed == "```" {
                    blocks.push(current.take().unwrap());
                } else {
                    body.push(line);
                }
            }
        }
    }
    blocks
}

fn malformed(field: &str) -> PlannerError {
    PlannerError::MalformedPlanBlock(field.to_string())
}

fn parse_indices(value: &str, field: &str) -> Result<Vec<usize>, PlannerError> {
    value.split(',').map(|v| v.trim().parse::<usize>().map_err(|_| malformed(field))).collect()
}

fn parse_plan_body(lines: &[&str]) -> Result<(Option<Vec<usize>>, PromptPlan), PlannerError> {
    let mut split = None;
    let mut base_prompt = String::new();
    let mut rows: Vec<(usize, Subprompt)> = Vec::new();
    let mut in_subprompts = false;
    let mut assignment = None;
    let mut base_ratio = DEFAULT_BASE_RATIO;
    let mut parent = None;

    for raw in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.contains('|') {
            if !in_subprompts {
                return Err(malformed("subprompts"));
            }
            let mut parts = line.splitn(3, '|').map(str::trim);
            let (Some(index), Some(phrase), Some(recaption)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(malformed("subprompts"));
            };
            let index = index.parse().map_err(|_| malformed("subprompts"))?;
            rows.push((index, Subprompt::new(phrase, recaption)));
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| malformed(line))?;
        let (key, value) = (key.trim(), value.trim());
        in_subprompts = false;
        match key {
            "split" => split = Some(parse_split_extended(value).map_err(|_| malformed("split"))?),
            "base_prompt" => base_prompt = value.to_string(),
            "subprompts" => {
                if !value.is_empty() {
                    return Err(malformed("subprompts"));
                }
                in_subprompts = true;
            }
            "assignment" => assignment = Some(parse_indices(value, "assignment")?),
            "base_ratio" => {
                base_ratio =
                    value.parse::<f64>().ok().filter(|b| b.is_finite()).ok_or_else(|| malformed("base_ratio"))?
            }
            "parent" => {
                parent =
                    Some(if value.is_empty() { Vec::new() } else { parse_indices(&value.replace('/', ","), "parent")? })
            }
            other => return Err(malformed(other)),
        }
    }

    let split = split.ok_or_else(|| malformed("split"))?;
    if rows.is_empty() {
        return Err(malformed("subprompts"));
    }
    rows.sort_by_key(|(i, _)| *i);
    if rows.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(malformed("subprompts"));
    }
    let subprompts = rows.into_iter().map(|(_, s)| s).collect();
    let assignment = assignment.ok_or_else(|| malformed("assignment"))?;
    let plan = PromptPlan { base_prompt, subprompts, split, assignment, base_ratio, nested: BTreeMap::new() };
    Ok((parent.filter(|p| !p.is_empty()), plan))
}

fn attach(root: &mut PromptPlan, path: &[usize], plan: PromptPlan) -> Result<(), PlannerError> {
    match path {
        [] => unreachable!("root blocks are not attached"),
        [last] => {
            root.nested.insert(*last, plan);
            Ok(())
        }
        [first, rest @ ..] => {
            let child = root.nested.get_mut(first).ok_or_else(|| malformed("parent"))?;
            attach(child, rest, plan)
        }
    }
}

/// Extracts the plan from the last root `rpg-plan` block. Blocks with a
/// `parent: i/j/...` key become nested plans of that region path, applied
/// shallowest first. Structure is not validated here.
pub fn parse_plan_response(text: &str) -> Result<PromptPlan, PlannerError> {
    let blocks = fenced_blocks(text, PLAN_TAG);
    if blocks.is_empty() {
        return Err(PlannerError::NoPlanBlock);
    }
    let mut root = None;
    let mut nested = Vec::new();
    for body in &blocks {
        match parse_plan_body(body)? {
            (None, plan) => root = Some(plan),
            (Some(path), plan) => nested.push((path, plan)),
        }
    }
    let mut root = root.ok_or(PlannerError::NoPlanBlock)?;
    nested.sort_by_key(|(path, _)| path.len());
    for (path, plan) in nested {
        attach(&mut root, &path, plan)?;
    }
    Ok(root)
}

fn write_plan_block(out: &mut String, plan: &PromptPlan, parent: &[usize]) {
    out.push_str("```rpg-plan\n");
    if !parent.is_empty() {
        let path: Vec<String> = parent.iter().map(usize::to_string).collect();
        out.push_str(&format!("parent: {}\n", path.join("/")));
    }
    if !plan.base_prompt.is_empty() {
        out.push_str(&format!("base_prompt: {}\n", plan.base_prompt));
    }
    out.push_str(&format!("split: {}\n", serialize_split(&plan.split)));
    out.push_str("subprompts:\n");
    for (i, s) in plan.subprompts.iter().enumerate() {
        out.push_str(&format!("{i}|{}|{}\n", s.phrase, s.recaption));
    }
    let assignment: Vec<String> = plan.assignment.iter().map(usize::to_string).collect();
    out.push_str(&format!("assignment: {}\n", assignment.join(",")));
    out.push_str(&format!("base_ratio: {}\n", plan.base_ratio));
    out.push_str("```\n");
    for (region, sub) in &plan.nested {
        let mut path = parent.to_vec();
        path.push(*region);
        write_plan_block(out, sub, &path);
    }
}

/// The plan as `rpg-plan` blocks, nested plans following their parent.
pub fn format_plan_block(plan: &PromptPlan) -> String {
    let mut out = String::new();
    write_plan_block(&mut out, plan, &[]);
    out
}

fn last_block<'a>(text: &'a str, tag: &str) -> Result<Vec<&'a str>, PlannerError> {
    fenced_blocks(text, tag)
        .pop()
        .ok_or_else(|| PlannerError::Unparseable { reason: format!("no `{tag}` block"), raw: text.to_string() })
}

fn unparseable(text: &str, reason: String) -> PlannerError {
    PlannerError::Unparseable { reason, raw: text.to_string() }
}

/// `phrase|recaption` rows from the last `rpg-recaption` block.
pub fn parse_recaption_response(text: &str) -> Result<Vec<Subprompt>, PlannerError> {
    let mut subs = Vec::new();
    for line in last_block(text, RECAPTION_TAG)?.iter().map(|l| l.trim()).filter(|l| !l.is_empty()) {
        let (phrase, recaption) =
            line.split_once('|').ok_or_else(|| unparseable(text, format!("row `{line}` lacks `|`")))?;
        subs.push(Subprompt::new(phrase.trim(), recaption.trim()));
    }
    Ok(subs)
}

fn entity_list(value: &str) -> EntityList {
    EntityList::new(value.split(','))
}

/// `targets:`, `present:` and any number of `discrepancy:` lines.
pub fn parse_entities_response(text: &str) -> Result<EntityReport, PlannerError> {
    let mut report = EntityReport::default();
    let (mut targets, mut present) = (false, false);
    for line in last_block(text, ENTITIES_TAG)?.iter().map(|l| l.trim()).filter(|l| !l.is_empty()) {
        let (key, value) =
            line.split_once(':').ok_or_else(|| unparseable(text, format!("line `{line}` is not `key: value`")))?;
        match key.trim() {
            "targets" => {
                report.targets = entity_list(value);
                targets = true;
            }
            "present" => {
                report.present = entity_list(value);
                present = true;
            }
            "discrepancy" => report.discrepancies.push(value.trim().parse().map_err(|e| unparseable(text, e))?),
            other => return Err(unparseable(text, format!("unknown key `{other}`"))),
        }
    }
    if !(targets && present) {
        return Err(unparseable(text, "entity block needs both `targets` and `present`".into()));
    }
    Ok(report)
}

/// Edit ops from the last `rpg-edit` block, in the edit plan file format.
pub fn parse_edit_response(text: &str) -> Result<EditPlan, PlannerError> {
    let body = last_block(text, EDIT_TAG)?;
    let ops = body
        .iter()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<EditOp>())
        .collect::<Result<_, _>>()?;
    Ok(EditPlan::new(ops))
}

/// Discrepancies as the user payload of an edit-planning request.
pub fn format_discrepancies(discrepancies: &[Discrepancy]) -> String {
    discrepancies.iter().map(|d| format!("{d}\n")).collect()
}
