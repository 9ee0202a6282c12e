//! Flat `key = value` experiment configuration.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. Keys
//! may appear at most once and unknown keys are rejected. Lists (`seeds`)
//! are comma separated.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::game::CorrectionOrder;
use crate::manager::{MismatchPolicy, SynthesisMode};
use crate::marl::QParams;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Grid,
    Particle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// Dynamic shielding.
    Ds,
    /// Factored shielding over static square regions.
    Fs,
    /// No shielding.
    None,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ds => "ds",
            Algorithm::Fs => "fs",
            Algorithm::None => "none",
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ds" => Ok(Self::Ds),
            "fs" => Ok(Self::Fs),
            "none" => Ok(Self::None),
            other => Err(format!("unknown algorithm {other:?} (expected ds, fs or none)")),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Exact,
    Learned,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleParams {
    pub agents: usize,
    pub bound: f64,
    pub accel: f64,
    pub v_max: f64,
    pub brake: f64,
    pub radius: f64,
}

impl Default for ParticleParams {
    fn default() -> Self {
        Self { agents: 2, bound: 2.0, accel: 0.25, v_max: 0.5, brake: 0.5, radius: 0.15 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub map_file: String,
    pub safety_spec: String,
    pub algorithm: Algorithm,
    pub k: usize,
    pub episodes: usize,
    /// `None` picks the environment default (100 grid, 50 particle).
    pub step_limit: Option<usize>,
    pub seeds: Vec<u64>,
    pub model: ModelKind,
    pub model_pretrain_steps: usize,
    pub model_n_min: u32,
    pub model_completion: bool,
    pub q: QParams,
    pub unsafe_penalty: f64,
    pub fs_region_size: usize,
    pub cell_width: f64,
    pub max_group_size: usize,
    pub lookahead_margin: bool,
    pub correction: CorrectionOrder,
    pub synthesis: SynthesisMode,
    pub random_starts: bool,
    pub record_timing: bool,
    pub mismatch_policy: MismatchPolicy,
    pub event_log: bool,
    pub eval_episodes: usize,
    pub particle: ParticleParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Grid,
            map_file: "builtin:open".into(),
            safety_spec: "G !collision".into(),
            algorithm: Algorithm::Ds,
            k: 2,
            episodes: 2000,
            step_limit: None,
            seeds: vec![0],
            model: ModelKind::Exact,
            model_pretrain_steps: 10_000,
            model_n_min: 5,
            model_completion: true,
            q: QParams::default(),
            unsafe_penalty: -10.0,
            fs_region_size: 3,
            cell_width: 0.5,
            max_group_size: 4,
            lookahead_margin: false,
            correction: CorrectionOrder::Fixed,
            synthesis: SynthesisMode::Auto,
            random_starts: false,
            record_timing: false,
            mismatch_policy: MismatchPolicy::Abort,
            event_log: false,
            eval_episodes: 10,
            particle: ParticleParams::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| ConfigError::Invalid { key: key.to_string(), message: e.to_string() })
}

fn flag(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(ConfigError::Invalid { key: key.into(), message: format!("expected a boolean, got {other:?}") }),
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or(ConfigError::Syntax { line: line_no })?;
            let (key, raw) = (key.trim(), raw.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: line_no });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate { line: line_no, key: key.into() });
            }
            cfg.set(key, raw).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: line_no, key },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    /// Applies one `key = value` entry.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        match key {
            "env" => {
                self.env = match raw {
                    "grid" => EnvKind::Grid,
                    "particle" => EnvKind::Particle,
                    other => return Err(invalid(key, format!("unknown environment {other:?}"))),
                }
            }
            "map_file" => self.map_file = raw.to_string(),
            "safety_spec" => self.safety_spec = raw.to_string(),
            "algorithm" => self.algorithm = value(key, raw)?,
            "k" => self.k = value(key, raw)?,
            "episodes" => self.episodes = value(key, raw)?,
            "step_limit" => self.step_limit = Some(value(key, raw)?),
            "seeds" => {
                self.seeds = raw
                    .split(',')
                    .map(|s| value::<u64>(key, s.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "model" => {
                self.model = match raw {
                    "exact" => ModelKind::Exact,
                    "learned" => ModelKind::Learned,
                    other => return Err(invalid(key, format!("unknown model {other:?}"))),
                }
            }
            "model_pretrain_steps" => self.model_pretrain_steps = value(key, raw)?,
            "model_n_min" => self.model_n_min = value(key, raw)?,
            "model_completion" => self.model_completion = flag(key, raw)?,
            "alpha" => self.q.alpha = value(key, raw)?,
            "gamma" => self.q.gamma = value(key, raw)?,
            "epsilon_start" => self.q.epsilon_start = value(key, raw)?,
            "epsilon_decay" => self.q.epsilon_decay = value(key, raw)?,
            "epsilon_min" => self.q.epsilon_min = value(key, raw)?,
            "unsafe_penalty" => self.unsafe_penalty = value(key, raw)?,
            "fs_region_size" => self.fs_region_size = value(key, raw)?,
            "cell_width" => self.cell_width = value(key, raw)?,
            "max_group_size" => self.max_group_size = value(key, raw)?,
            "lookahead_margin" => self.lookahead_margin = flag(key, raw)?,
            "correction" => self.correction = value(key, raw)?,
            "synthesis" => self.synthesis = value(key, raw)?,
            "random_starts" => self.random_starts = flag(key, raw)?,
            "record_timing" => self.record_timing = flag(key, raw)?,
            "mismatch_policy" => self.mismatch_policy = value(key, raw)?,
            "event_log" => self.event_log = flag(key, raw)?,
            "eval_episodes" => self.eval_episodes = value(key, raw)?,
            "particle_agents" => self.particle.agents = value(key, raw)?,
            "particle_bound" => self.particle.bound = value(key, raw)?,
            "particle_accel" => self.particle.accel = value(key, raw)?,
            "particle_v_max" => self.particle.v_max = value(key, raw)?,
            "particle_brake" => self.particle.brake = value(key, raw)?,
            "particle_radius" => self.particle.radius = value(key, raw)?,
            other => return Err(ConfigError::UnknownKey { line: 0, key: other.to_string() }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if self.episodes == 0 {
            return Err(invalid("episodes", "must be at least 1"));
        }
        if self.step_limit == Some(0) {
            return Err(invalid("step_limit", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if !(self.q.alpha > 0.0 && self.q.alpha <= 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.q.gamma) {
            return Err(invalid("gamma", "must lie in [0, 1)"));
        }
        for (key, v) in [
            ("epsilon_start", self.q.epsilon_start),
            ("epsilon_decay", self.q.epsilon_decay),
            ("epsilon_min", self.q.epsilon_min),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(key, "must lie in [0, 1]"));
            }
        }
        if self.fs_region_size == 0 {
            return Err(invalid("fs_region_size", "must be at least 1"));
        }
        if !(self.cell_width > 0.0) {
            return Err(invalid("cell_width", "must be positive"));
        }
        if self.max_group_size == 0 {
            return Err(invalid("max_group_size", "must be at least 1"));
        }
        if self.env == EnvKind::Particle {
            if self.model == ModelKind::Exact && self.algorithm != Algorithm::None {
                return Err(invalid("model", "the particle environment needs model = learned"));
            }
            if self.algorithm == Algorithm::Fs {
                return Err(invalid("algorithm", "factored shielding is only available on grid maps"));
            }
            if self.particle.agents == 0 {
                return Err(invalid("particle_agents", "must be at least 1"));
            }
            let p = &self.particle;
            if p.v_max * 1.0 > self.cell_width + 1e-12 {
                return Err(invalid("particle_v_max", "must not exceed cell_width (one cell per step)"));
            }
            if 2.0 * p.radius > self.cell_width {
                return Err(invalid("particle_radius", "agent diameter must not exceed cell_width"));
            }
        }
        crate::game::SpecMonitor::compile(&self.safety_spec).map_err(|e| invalid("safety_spec", e.to_string()))?;
        Ok(())
    }

    pub fn step_limit(&self) -> usize {
        self.step_limit.unwrap_or(match self.env {
            EnvKind::Grid => 100,
            EnvKind::Particle => 50,
        })
    }
}
