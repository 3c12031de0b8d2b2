use super::{derive_seed, execute_plan, EditError, OpLogEntry};
use crate::denoisers::{oracle_caption, GmmWorld};
use crate::diffusion::{Denoiser, LatentGrid, NoiseSchedule, SamplerConfig};
use crate::layout::RegionRect;
use crate::planner::{
    caption_entities, plan_edit, plan_edit_rules, Discrepancy, DiscrepancyKind, EditPlan, MllmBackend,
};

pub const DEFAULT_MAX_ROUNDS: usize = 3;

/// Finds what is wrong with the current latent.
pub trait Captioner {
    fn discrepancies(&self, latent: &LatentGrid) -> Result<Vec<Discrepancy>, EditError>;
}

/// One line per region: `region i (x0,y0,w,h): label`.
pub fn describe_regions(regions: &[RegionRect], labels: &[String]) -> String {
    regions.iter().zip(labels).enumerate().map(|(i, (r, l))| format!("region {i} ({r}): {l}\n")).collect()
}

/// Labels regions with [`oracle_caption`] and compares them with the
/// wanted label per region. A region that should be background but is not
/// is redundant, a background region that should hold something is
/// missing it, and any other disagreement is an attribute mismatch whose
/// detail is the wanted label.
pub struct OracleCaptioner {
    pub world: GmmWorld,
    pub regions: Vec<RegionRect>,
    pub targets: Vec<String>,
    pub background: String,
}

impl OracleCaptioner {
    pub fn new(world: GmmWorld, regions: Vec<RegionRect>, targets: Vec<String>, background: impl Into<String>) -> Self {
        assert_eq!(regions.len(), targets.len(), "one target per region");
        OracleCaptioner { world, regions, targets, background: background.into() }
    }

    pub fn labels(&self, latent: &LatentGrid) -> Result<Vec<String>, EditError> {
        Ok(oracle_caption(latent, &self.regions, &self.world)?)
    }
}

impl Captioner for OracleCaptioner {
    fn discrepancies(&self, latent: &LatentGrid) -> Result<Vec<Discrepancy>, EditError> {
        let labels = self.labels(latent)?;
        let bg = self.background.as_str();
        let mut out = Vec::new();
        for ((rect, have), want) in self.regions.iter().zip(&labels).zip(&self.targets) {
            if have == want {
                continue;
            }
            let d = if want == bg {
                Discrepancy::new(DiscrepancyKind::RedundantEntity, have, "")
            } else if have == bg {
                Discrepancy::new(DiscrepancyKind::MissingEntity, want, "")
            } else {
                Discrepancy::new(DiscrepancyKind::AttributeMismatch, have, want)
            };
            out.push(d.at(*rect));
        }
        Ok(out)
    }
}

/// Describes the latent with the oracle labels and asks the chat model to
/// compare that description with the target prompt.
pub struct MllmCaptioner<'a> {
    pub backend: &'a dyn MllmBackend,
    pub target_prompt: String,
    pub world: GmmWorld,
    pub regions: Vec<RegionRect>,
}

impl Captioner for MllmCaptioner<'_> {
    fn discrepancies(&self, latent: &LatentGrid) -> Result<Vec<Discrepancy>, EditError> {
        let labels = oracle_caption(latent, &self.regions, &self.world)?;
        let caption = describe_regions(&self.regions, &labels);
        Ok(caption_entities(&caption, &self.target_prompt, self.backend)?.discrepancies)
    }
}

/// How discrepancies become edit plans.
pub enum EditPlanner<'a> {
    Rules,
    Mllm(&'a dyn MllmBackend),
}

impl EditPlanner<'_> {
    fn plan(
        &self,
        discrepancies: &[Discrepancy],
        latent: &LatentGrid,
        background: &str,
    ) -> Result<EditPlan, EditError> {
        Ok(match self {
            EditPlanner::Rules => plan_edit_rules(discrepancies, latent.canvas(), background),
            EditPlanner::Mllm(backend) => plan_edit(discrepancies, *backend, latent.canvas(), background)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub max_rounds: usize,
    pub background: String,
    pub sampler: SamplerConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_rounds: DEFAULT_MAX_ROUNDS,
            background: "background".into(),
            sampler: SamplerConfig::default(),
        }
    }
}

/// What one round saw and did. `latent` is the state after the round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub round: usize,
    pub discrepancies: Vec<Discrepancy>,
    pub ops: Vec<OpLogEntry>,
    pub latent: LatentGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopStatus {
    Converged,
    MaxRoundsExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    pub latent: LatentGrid,
    pub rounds: Vec<RoundState>,
    pub status: LoopStatus,
    /// What the captioner reported about `latent`.
    pub remaining: Vec<Discrepancy>,
}

impl LoopOutcome {
    pub fn success(&self) -> bool {
        self.status == LoopStatus::Converged
    }
}

/// Caption, plan and edit until the captioner reports nothing, at most
/// `max_rounds` times. A round that finds no discrepancy ends the loop
/// with no ops. When the budget runs out the result is captioned once
/// more, and the loop has converged only if that finds nothing.
pub fn run_closed_loop(
    initial: &LatentGrid,
    captioner: &dyn Captioner,
    planner: &EditPlanner<'_>,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    config: &LoopConfig,
) -> Result<LoopOutcome, EditError> {
    if config.max_rounds == 0 {
        return Err(EditError::NoRounds);
    }
    let mut latent = initial.clone();
    let mut rounds = Vec::new();
    for round in 1..=config.max_rounds {
        let discrepancies = captioner.discrepancies(&latent)?;
        if discrepancies.is_empty() {
            rounds.push(RoundState { round, discrepancies, ops: Vec::new(), latent: latent.clone() });
            return Ok(LoopOutcome { latent, rounds, status: LoopStatus::Converged, remaining: Vec::new() });
        }
        let plan = planner.plan(&discrepancies, &latent, &config.background)?;
        let seed = derive_seed(config.sampler.seed, &[b"round", &(round as u64).to_le_bytes()]);
        let (next, ops) = execute_plan(&plan, &latent, denoiser, schedule, &config.sampler.clone().with_seed(seed))?;
        latent = next;
        rounds.push(RoundState { round, discrepancies, ops, latent: latent.clone() });
    }
    let remaining = captioner.discrepancies(&latent)?;
    let status = if remaining.is_empty() { LoopStatus::Converged } else { LoopStatus::MaxRoundsExceeded };
    Ok(LoopOutcome { latent, rounds, status, remaining })
}
