use std::collections::BTreeMap;

use thiserror::Error;

use crate::layout::{resolve_regions, Canvas, LayoutError, SplitSpec};

/// Base ratio used when neither the planner nor the caller supplies one.
pub const DEFAULT_BASE_RATIO: f64 = 0.3;

/// A key phrase lifted from the user prompt and its enriched rewrite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subprompt {
    pub phrase: String,
    pub recaption: String,
}

impl Subprompt {
    pub fn new(phrase: impl Into<String>, recaption: impl Into<String>) -> Self {
        Subprompt { phrase: phrase.into(), recaption: recaption.into() }
    }
}

/// Output of prompt recaptioning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecaptionResult {
    pub user_prompt: String,
    pub subprompts: Vec<Subprompt>,
}

impl RecaptionResult {
    pub fn check(&self) -> Result<(), String> {
        if self.subprompts.is_empty() {
            return Err("no subprompts".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, s) in self.subprompts.iter().enumerate() {
            if s.phrase.trim().is_empty() || s.recaption.trim().is_empty() {
                return Err(format!("subprompt {i} is empty"));
            }
            if s.recaption.chars().count() < s.phrase.chars().count() {
                return Err(format!("recaption of subprompt {i} is shorter than its phrase"));
            }
            if !seen.insert(s.phrase.trim().to_lowercase()) {
                return Err(format!("duplicate key phrase `{}`", s.phrase));
            }
        }
        Ok(())
    }
}

/// The planner's structured output: who goes where, and how strongly the
/// full-prompt branch is blended back in.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPlan {
    pub base_prompt: String,
    pub subprompts: Vec<Subprompt>,
    pub split: SplitSpec,
    /// `assignment[i]` is the region index of subprompt `i`.
    pub assignment: Vec<usize>,
    pub base_ratio: f64,
    /// Regions whose content is itself generated from a sub-plan.
    pub nested: BTreeMap<usize, PromptPlan>,
}

impl PromptPlan {
    /// A plan whose subprompts fill the regions of `split` in order.
    pub fn ordered(
        base_prompt: impl Into<String>,
        subprompts: Vec<Subprompt>,
        split: SplitSpec,
        base_ratio: f64,
    ) -> Self {
        let assignment = (0..subprompts.len()).collect();
        PromptPlan {
            base_prompt: base_prompt.into(),
            subprompts,
            split,
            assignment,
            base_ratio,
            nested: BTreeMap::new(),
        }
    }

    pub fn with_nested(mut self, region: usize, plan: PromptPlan) -> Self {
        self.nested.insert(region, plan);
        self
    }

    /// Levels of plans, counting this one.
    pub fn depth(&self) -> usize {
        1 + self.nested.values().map(PromptPlan::depth).max().unwrap_or(0)
    }

    /// Subprompt index for each region, when the assignment is a bijection.
    pub fn region_subprompts(&self) -> Option<Vec<usize>> {
        let n = self.subprompts.len();
        let mut inverse = vec![usize::MAX; n];
        if self.assignment.len() != n {
            return None;
        }
        for (sub, &region) in self.assignment.iter().enumerate() {
            if region >= n || inverse[region] != usize::MAX {
                return None;
            }
            inverse[region] = sub;
        }
        Some(inverse)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanInvalid {
    #[error("base prompt is empty")]
    EmptyBasePrompt,
    #[error("plan has no subprompts")]
    NoSubprompts,
    #[error("subprompt {0} has an empty phrase or recaption")]
    EmptySubprompt(usize),
    #[error("split has {regions} regions but the plan has {subprompts} subprompts")]
    RegionCountMismatch { regions: usize, subprompts: usize },
    #[error("assignment {0:?} is not a bijection onto the regions")]
    AssignmentNotBijective(Vec<usize>),
    #[error("base_ratio {0} outside [0, 1]")]
    BaseRatio(f64),
    #[error("layout does not fit the canvas: {0}")]
    Layout(#[from] LayoutError),
    #[error("nested plan refers to region {0}, which does not exist")]
    NestedRegionOutOfRange(usize),
    #[error("nested plan for region {region}: {inner}")]
    Nested { region: usize, inner: Box<PlanInvalid> },
    #[error("unknown edit op kind `{0}`")]
    UnknownOpKind(String),
    #[error("{0}")]
    Other(String),
}

/// Structural checks plus resolution of the split on `canvas`. Nested plans
/// are checked recursively against the dimensions of their region.
pub fn validate_plan(plan: &PromptPlan, canvas: Canvas) -> Result<(), PlanInvalid> {
    validate_structure(plan)?;
    let rects = resolve_regions(&plan.split, canvas)?;
    for (&region, sub) in &plan.nested {
        validate_plan(sub, rects[region].canvas())
            .map_err(|inner| PlanInvalid::Nested { region, inner: Box::new(inner) })?;
    }
    Ok(())
}

/// The canvas-independent part of [`validate_plan`].
pub fn validate_structure(plan: &PromptPlan) -> Result<(), PlanInvalid> {
    if plan.base_prompt.trim().is_empty() {
        return Err(PlanInvalid::EmptyBasePrompt);
    }
    if plan.subprompts.is_empty() {
        return Err(PlanInvalid::NoSubprompts);
    }
    if let Some(i) = plan.subprompts.iter().position(|s| s.phrase.trim().is_empty() || s.recaption.trim().is_empty()) {
        return Err(PlanInvalid::EmptySubprompt(i));
    }
    let regions = plan.split.region_count();
    if regions != plan.subprompts.len() {
        return Err(PlanInvalid::RegionCountMismatch { regions, subprompts: plan.subprompts.len() });
    }
    if plan.region_subprompts().is_none() {
        return Err(PlanInvalid::AssignmentNotBijective(plan.assignment.clone()));
    }
    if !(0.0..=1.0).contains(&plan.base_ratio) {
        return Err(PlanInvalid::BaseRatio(plan.base_ratio));
    }
    for (&region, sub) in &plan.nested {
        if region >= regions {
            return Err(PlanInvalid::NestedRegionOutOfRange(region));
        }
        validate_structure(sub).map_err(|inner| PlanInvalid::Nested { region, inner: Box::new(inner) })?;
    }
    Ok(())
}
