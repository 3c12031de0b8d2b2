use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{normalize_prompt, CondEmbedding, DenoiseError};
use crate::diffusion::{Denoiser, LatentGrid, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// A one-dimensional Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture1d {
    components: Vec<Component>,
}

impl Mixture1d {
    pub fn new(components: Vec<Component>) -> Result<Self, String> {
        if components.is_empty() {
            return Err("mixture has no components".into());
        }
        if let Some(c) = components.iter().find(|c| !(c.weight > 0.0 && c.weight.is_finite())) {
            return Err(format!("weight {} must be positive", c.weight));
        }
        if let Some(c) = components.iter().find(|c| !(c.var > 0.0 && c.var.is_finite())) {
            return Err(format!("variance {} must be positive", c.var));
        }
        if let Some(c) = components.iter().find(|c| !c.mean.is_finite()) {
            return Err(format!("mean {} must be finite", c.mean));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("weights sum to {total}, not 1"));
        }
        Ok(Mixture1d { components })
    }

    pub fn gaussian(mean: f64, var: f64) -> Self {
        Mixture1d::new(vec![Component { weight: 1.0, mean, var }]).expect("valid gaussian")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components.iter().map(|c| c.weight * (c.var + c.mean * c.mean)).sum::<f64>() - m * m
    }

    /// `E[x0 | z]` when `z = a * x0 + sqrt(1 - a^2) * eps`, `a = sqrt(alpha_bar)`.
    pub fn posterior_mean(&self, z: f64, alpha_bar: f64) -> f64 {
        let a = alpha_bar.sqrt();
        let noise_var = 1.0 - alpha_bar;
        let mut log_r = Vec::with_capacity(self.components.len());
        let mut means = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let var_z = a * a * c.var + noise_var;
            let d = z - a * c.mean;
            log_r.push(c.weight.ln() - 0.5 * var_z.ln() - d * d / (2.0 * var_z));
            means.push(c.mean + a * c.var / var_z * d);
        }
        let max = log_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (lr, m) in log_r.iter().zip(&means) {
            let r = (lr - max).exp();
            num += r * m;
            den += r;
        }
        num / den
    }
}

impl fmt::Display for Mixture1d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(" ; ")?;
            }
            write!(f, "{},{},{}", c.weight, c.mean, c.var)?;
        }
        Ok(())
    }
}

/// Per-channel mixtures for one conditioning token. A single mixture applies
/// to every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CondMixture {
    channels: Vec<Mixture1d>,
}

impl CondMixture {
    pub fn new(channels: Vec<Mixture1d>) -> Self {
        assert!(!channels.is_empty());
        CondMixture { channels }
    }

    pub fn uniform(mixture: Mixture1d) -> Self {
        CondMixture { channels: vec![mixture] }
    }

    pub fn channel(&self, c: usize) -> &Mixture1d {
        if self.channels.len() == 1 {
            &self.channels[0]
        } else {
            &self.channels[c]
        }
    }

    pub fn defined_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn supports(&self, channels: usize) -> bool {
        self.channels.len() == 1 || self.channels.len() == channels
    }

    pub fn means(&self, channels: usize) -> Vec<f64> {
        (0..channels).map(|c| self.channel(c).mean()).collect()
    }
}

pub const FALLBACK_ID: &str = "*";

/// Each conditioning id denotes a mixture per latent channel, applied
/// independently to every spatial cell.
///
/// Text form, one cond per line, `#` comments allowed:
///
/// ```text
/// cond-id | w,mean,var ; w,mean,var | w,mean,var
/// ```
///
/// Groups after the id are channels; a single group covers all channels.
/// Ids are matched after [`normalize_prompt`]. An entry with id `*`, when
/// present, answers every id that is not defined.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GmmWorld {
    conds: BTreeMap<String, CondMixture>,
}

impl GmmWorld {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: &str, mixture: CondMixture) -> Self {
        self.insert(id, mixture);
        self
    }

    pub fn insert(&mut self, id: &str, mixture: CondMixture) {
        self.conds.insert(normalize_prompt(id), mixture);
    }

    pub fn get(&self, id: &str) -> Option<&CondMixture> {
        self.conds.get(id).or_else(|| self.conds.get(&normalize_prompt(id))).or_else(|| self.conds.get(FALLBACK_ID))
    }

    /// The entry for exactly this id, ignoring the fallback.
    pub fn get_exact(&self, id: &str) -> Option<&CondMixture> {
        self.conds.get(&normalize_prompt(id))
    }

    /// Conditions in ascending id order, without the fallback.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &CondMixture)> {
        self.conds.iter().filter(|(k, _)| k.as_str() != FALLBACK_ID).map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.conds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conds.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, m) in &self.conds {
            out.push_str(id);
            for ch in &m.channels {
                out.push_str(" | ");
                out.push_str(&ch.to_string());
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for GmmWorld {
    type Err = DenoiseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut world = GmmWorld::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| DenoiseError::BadWorld { line: i + 1, reason };
            let mut parts = line.split('|');
            let id = normalize_prompt(parts.next().unwrap_or(""));
            if id.is_empty() {
                return Err(bad("missing cond id".into()));
            }
            let mut channels = Vec::new();
            for group in parts {
                let mut comps = Vec::new();
                for comp in group.split(';') {
                    let nums: Vec<f64> = comp
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad(format!("bad component `{}`", comp.trim())))?;
                    let [weight, mean, var] = nums[..] else {
                        return Err(bad(format!("component `{}` needs w,mean,var", comp.trim())));
                    };
                    comps.push(Component { weight, mean, var });
                }
                channels.push(Mixture1d::new(comps).map_err(bad)?);
            }
            if channels.is_empty() {
                return Err(bad(format!("`{id}` has no mixture")));
            }
            if world.conds.insert(id.clone(), CondMixture::new(channels)).is_some() {
                return Err(bad(format!("`{id}` defined twice")));
            }
        }
        Ok(world)
    }
}

/// Closed-form `E[x0 | z_t]` under the cond's mixture, per cell and channel.
pub fn gmm_posterior_x0(
    z_t: &LatentGrid,
    t: usize,
    cond: &CondEmbedding,
    world: &GmmWorld,
    schedule: &NoiseSchedule,
) -> Result<LatentGrid, DenoiseError> {
    let mixture = world.get(&cond.id).ok_or_else(|| DenoiseError::UnknownCond(cond.id.clone()))?;
    let channels = z_t.channels();
    if !mixture.supports(channels) {
        return Err(DenoiseError::ChannelMismatch {
            cond: cond.id.clone(),
            defined: mixture.defined_channels(),
            latent: channels,
        });
    }
    let alpha_bar = schedule.alpha_bar(t);
    let data = z_t
        .data()
        .iter()
        .enumerate()
        .map(|(i, &z)| mixture.channel(i % channels).posterior_mean(z as f64, alpha_bar) as f32)
        .collect();
    Ok(LatentGrid::new(z_t.shape(), data).expect("posterior mean is finite"))
}

/// [`Denoiser`] backed by [`gmm_posterior_x0`].
#[derive(Debug, Clone)]
pub struct GmmDenoiser {
    world: GmmWorld,
}

impl GmmDenoiser {
    pub fn new(world: GmmWorld) -> Self {
        GmmDenoiser { world }
    }

    pub fn world(&self) -> &GmmWorld {
        &self.world
    }
}

impl Denoiser for GmmDenoiser {
    fn predict_x0(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &CondEmbedding,
        schedule: &NoiseSchedule,
    ) -> Result<LatentGrid, DenoiseError> {
        gmm_posterior_x0(z_t, t, cond, &self.world, schedule)
    }
}
