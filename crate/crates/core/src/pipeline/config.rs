use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use super::PipelineError;
use crate::diffusion::{BranchGeometry, SamplerConfig};
use crate::edit::DEFAULT_MAX_ROUNDS;
use crate::layout::Canvas;
use crate::planner::HttpConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Fixtures,
    Http,
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixtures" => Ok(BackendChoice::Fixtures),
            "http" => Ok(BackendChoice::Http),
            other => Err(format!("unknown backend `{other}` (expected http or fixtures)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserChoice {
    Gmm,
    Attn,
}

impl FromStr for DenoiserChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gmm" => Ok(DenoiserChoice::Gmm),
            "attn" => Ok(DenoiserChoice::Attn),
            other => Err(format!("unknown denoiser `{other}` (expected gmm or attn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptionerChoice {
    Oracle,
    Mllm,
}

impl FromStr for CaptionerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(CaptionerChoice::Oracle),
            "mllm" => Ok(CaptionerChoice::Mllm),
            other => Err(format!("unknown captioner `{other}` (expected oracle or mllm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditPlannerChoice {
    Rules,
    Mllm,
}

impl FromStr for EditPlannerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rules" => Ok(EditPlannerChoice::Rules),
            "mllm" => Ok(EditPlannerChoice::Mllm),
            other => Err(format!("unknown edit planner `{other}` (expected rules or mllm)")),
        }
    }
}

/// Everything a command needs. Text form is one `key = value` per line;
/// `#` starts a comment and `record.*` keys are ignored so a run record can
/// be fed back as a config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backend: BackendChoice,
    pub fixtures: Option<PathBuf>,
    /// Forward fixture misses to the HTTP backend and store the replies.
    pub record: bool,
    pub http: HttpConfig,
    pub sampler: SamplerConfig,
    pub canvas: Canvas,
    pub channels: usize,
    pub denoiser: DenoiserChoice,
    pub world: Option<PathBuf>,
    pub attn_dim: usize,
    pub attn_tokens: usize,
    pub attn_seed: u64,
    pub max_rounds: usize,
    pub background: String,
    pub captioner: CaptionerChoice,
    pub edit_planner: EditPlannerChoice,
    pub prompt: Option<String>,
    pub plan: Option<PathBuf>,
    pub latent: Option<PathBuf>,
    pub edits: Option<PathBuf>,
    pub png_scale: u32,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendChoice::Fixtures,
            fixtures: None,
            record: false,
            http: HttpConfig::default(),
            sampler: SamplerConfig::default(),
            canvas: Canvas { width: 16, height: 16 },
            channels: 4,
            denoiser: DenoiserChoice::Gmm,
            world: None,
            attn_dim: 16,
            attn_tokens: 4,
            attn_seed: 0,
            max_rounds: DEFAULT_MAX_ROUNDS,
            background: "background".into(),
            captioner: CaptionerChoice::Mllm,
            edit_planner: EditPlannerChoice::Mllm,
            prompt: None,
            plan: None,
            latent: None,
            edits: None,
            png_scale: 8,
            out: PathBuf::from("rpg-out"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| PipelineError::Usage(format!("bad value for `{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(PipelineError::Usage(format!("bad value for `{key}`: expected true or false"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Sets one key, as in the config file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let value = value.trim();
        match key {
            "backend" => self.backend = parse_value(key, value)?,
            "fixtures" => self.fixtures = opt_path(value),
            "record" => self.record = parse_bool(key, value)?,
            "http.endpoint" => self.http.endpoint = value.to_string(),
            "http.model" => self.http.model = value.to_string(),
            "http.api_key_env" => self.http.api_key_env = value.to_string(),
            "http.timeout_secs" => self.http.timeout = Duration::from_secs_f64(parse_value(key, value)?),
            "seed" => self.sampler.seed = parse_value(key, value)?,
            "steps" => self.sampler.steps = parse_value(key, value)?,
            "base_ratio" => {
                self.sampler.base_ratio = if value.is_empty() { None } else { Some(parse_value(key, value)?) }
            }
            "resize_mode" => self.sampler.resize_mode = parse_value(key, value)?,
            "geometry" => self.sampler.geometry = parse_value::<BranchGeometry>(key, value)?,
            "max_depth" => self.sampler.max_depth = parse_value(key, value)?,
            "canvas" => self.canvas = parse_value(key, value)?,
            "channels" => self.channels = parse_value(key, value)?,
            "denoiser" => self.denoiser = parse_value(key, value)?,
            "world" => self.world = opt_path(value),
            "attn.dim" => self.attn_dim = parse_value(key, value)?,
            "attn.tokens" => self.attn_tokens = parse_value(key, value)?,
            "attn.seed" => self.attn_seed = parse_value(key, value)?,
            "max_rounds" => self.max_rounds = parse_value(key, value)?,
            "background" => self.background = value.to_string(),
            "loop.captioner" => self.captioner = parse_value(key, value)?,
            "loop.planner" => self.edit_planner = parse_value(key, value)?,
            "prompt" => self.prompt = (!value.is_empty()).then(|| value.to_string()),
            "plan" => self.plan = opt_path(value),
            "latent" => self.latent = opt_path(value),
            "edits" => self.edits = opt_path(value),
            "png_scale" => self.png_scale = parse_value(key, value)?,
            "out" => self.out = PathBuf::from(value),
            k if k.starts_with("record.") => {}
            other => return Err(PipelineError::Usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. Relative paths given in
    /// the text are taken relative to `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, PipelineError> {
        let mut config = RunConfig::default();
        let mut out_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
            out_set |= key.trim() == "out";
            config.set(key.trim(), value)?;
        }
        if let Some(base) = base_dir {
            config.rebase(base, out_set);
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    fn rebase(&mut self, base: &Path, out: bool) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.fixtures);
        fix(&mut self.world);
        fix(&mut self.plan);
        fix(&mut self.latent);
        fix(&mut self.edits);
        if out && self.out.is_relative() {
            self.out = base.join(&self.out);
        }
    }

    /// Paths made absolute against the working directory.
    pub fn absolutized(&self) -> Self {
        let abs = |p: &PathBuf| std::path::absolute(p).unwrap_or_else(|_| p.clone());
        let mut c = self.clone();
        for p in [&mut c.fixtures, &mut c.world, &mut c.plan, &mut c.latent, &mut c.edits].into_iter().flatten() {
            *p = abs(p);
        }
        c.out = abs(&c.out);
        c
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.sampler.steps == 0 {
            return Err(PipelineError::Usage("steps must be at least 1".into()));
        }
        if let Some(b) = self.sampler.base_ratio {
            if !(0.0..=1.0).contains(&b) {
                return Err(PipelineError::Usage(format!("base_ratio {b} outside [0, 1]")));
            }
        }
        if self.channels == 0 {
            return Err(PipelineError::Usage("channels must be at least 1".into()));
        }
        if self.max_rounds == 0 {
            return Err(PipelineError::Usage("max_rounds must be at least 1".into()));
        }
        if self.png_scale == 0 {
            return Err(PipelineError::Usage("png_scale must be at least 1".into()));
        }
        match self.backend {
            BackendChoice::Fixtures if self.fixtures.is_none() => {
                Err(PipelineError::Usage("the fixtures backend needs a fixture directory".into()))
            }
            BackendChoice::Http if self.http.endpoint.trim().is_empty() => {
                Err(PipelineError::Usage("the http backend needs http.endpoint".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert(
            "backend",
            match self.backend {
                BackendChoice::Fixtures => "fixtures".into(),
                BackendChoice::Http => "http".into(),
            },
        );
        kv.insert("fixtures", path(&self.fixtures));
        kv.insert("record", self.record.to_string());
        kv.insert("http.endpoint", self.http.endpoint.clone());
        kv.insert("http.model", self.http.model.clone());
        kv.insert("http.api_key_env", self.http.api_key_env.clone());
        kv.insert("http.timeout_secs", self.http.timeout.as_secs_f64().to_string());
        kv.insert("seed", self.sampler.seed.to_string());
        kv.insert("steps", self.sampler.steps.to_string());
        kv.insert("base_ratio", self.sampler.base_ratio.map(|b| b.to_string()).unwrap_or_default());
        kv.insert("resize_mode", self.sampler.resize_mode.to_string());
        kv.insert("geometry", self.sampler.geometry.to_string());
        kv.insert("max_depth", self.sampler.max_depth.to_string());
        kv.insert("canvas", self.canvas.to_string());
        kv.insert("channels", self.channels.to_string());
        kv.insert(
            "denoiser",
            match self.denoiser {
                DenoiserChoice::Gmm => "gmm".into(),
                DenoiserChoice::Attn => "attn".into(),
            },
        );
        kv.insert("world", path(&self.world));
        kv.insert("attn.dim", self.attn_dim.to_string());
        kv.insert("attn.tokens", self.attn_tokens.to_string());
        kv.insert("attn.seed", self.attn_seed.to_string());
        kv.insert("max_rounds", self.max_rounds.to_string());
        kv.insert("background", self.background.clone());
        kv.insert(
            "loop.captioner",
            match self.captioner {
                CaptionerChoice::Oracle => "oracle".into(),
                CaptionerChoice::Mllm => "mllm".into(),
            },
        );
        kv.insert(
            "loop.planner",
            match self.edit_planner {
                EditPlannerChoice::Rules => "rules".into(),
                EditPlannerChoice::Mllm => "mllm".into(),
            },
        );
        kv.insert("prompt", self.prompt.clone().unwrap_or_default());
        kv.insert("plan", path(&self.plan));
        kv.insert("latent", path(&self.latent));
        kv.insert("edits", path(&self.edits));
        kv.insert("png_scale", self.png_scale.to_string());
        kv.insert("out", self.out.display().to_string());
        kv.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// A config snapshot plus what the run produced, as `record.*` keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub fields: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(config: &RunConfig) -> Self {
        RunRecord { config: config.absolutized(), fields: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.fields.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut out = self.config.to_text();
        for (k, v) in &self.fields {
            out.push_str(&format!("record.{k} = {v}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let config = RunConfig::parse(text, None)?;
        let fields = text
            .lines()
            .filter_map(|l| l.trim().strip_prefix("record."))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Ok(RunRecord { config, fields })
    }
}
