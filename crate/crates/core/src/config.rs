//! TOML experiment files and serialized environments.
//!
//! An experiment file has the sections `[env]`, `[agent]`, `[lr]`, `[run]`
//! and an optional `[suite]` that expands one file into several
//! experiments. The README documents the full grammar.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::env::{EnvSpec, TransitionKind};
use crate::harness::{
    default_lr_grid, log_spaced, ExperimentConfig, HarnessError, MseWeighting, StartMode, DEFAULT_CHECKPOINTS,
    DEFAULT_N_RUNS, DEFAULT_N_UPDATES, LR_GRID_POINTS,
};
use crate::mrp::{Mrp, MrpError, MrpRecord};
use crate::reward::RewardKind;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Field { field: &'static str, message: String },
    #[error(transparent)]
    Invalid(#[from] HarnessError),
    #[error(transparent)]
    Mrp(#[from] MrpError),
    #[error("could not serialize: {0}")]
    Serialize(#[from] toml::ser::Error),
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    env: Option<EnvSection>,
    agent: Option<AgentSection>,
    lr: Option<LrSection>,
    run: Option<RunSection>,
    suite: Option<SuiteSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSection {
    transition: Option<String>,
    rewards: Option<String>,
    n_states: Option<usize>,
    branching: Option<usize>,
    reward_scale: Option<f64>,
    gamma: Option<f64>,
    seed: Option<u64>,
    skew: Option<f64>,
    skew_prob: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSection {
    kind: Option<String>,
    m: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LrSection {
    min: Option<f64>,
    max: Option<f64>,
    count: Option<usize>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    n_updates: Option<usize>,
    checkpoints: Option<Vec<usize>>,
    n_runs: Option<usize>,
    base_seed: Option<u64>,
    start: Option<StartMode>,
    weighting: Option<MseWeighting>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteSection {
    transitions: Option<Vec<String>>,
    rewards: Option<Vec<String>>,
    agents: Option<Vec<String>>,
}

/// Parses `td`, `qtd`, `pqtd` or `qtd:128` style agent labels.
pub fn parse_agent_label(label: &str, default_m: usize) -> Result<(AgentKind, usize), String> {
    let (kind, m) = match label.split_once(':') {
        Some((k, m)) => (k, m.trim().parse::<usize>().map_err(|_| format!("bad quantile count in `{label}`"))?),
        None => (label, default_m),
    };
    let kind: AgentKind = kind.parse()?;
    if kind.uses_quantiles() && m == 0 {
        return Err(format!("`{label}` needs at least one quantile"));
    }
    Ok((kind, if kind == AgentKind::Td { 1 } else { m }))
}

/// Parses an experiment file into one or more validated configurations.
pub fn parse_config(text: &str) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let file: ConfigFile = toml::from_str(text)?;
    let env = file.env.unwrap_or_default();
    let agent = file.agent.unwrap_or_default();
    let suite = file.suite;

    let transitions: Vec<TransitionKind> = match suite.as_ref().and_then(|s| s.transitions.clone()) {
        Some(list) => list.iter().map(|t| t.parse().map_err(|e| field("suite.transitions", format!("{e}")))).collect::<Result<_, _>>()?,
        None => vec![env
            .transition
            .as_deref()
            .ok_or_else(|| field("env.transition", "missing"))?
            .parse()
            .map_err(|e| field("env.transition", format!("{e}")))?],
    };
    let rewards: Vec<RewardKind> = match suite.as_ref().and_then(|s| s.rewards.clone()) {
        Some(list) => list.iter().map(|r| r.parse().map_err(|e| field("suite.rewards", format!("{e}")))).collect::<Result<_, _>>()?,
        None => vec![env
            .rewards
            .as_deref()
            .ok_or_else(|| field("env.rewards", "missing"))?
            .parse()
            .map_err(|e| field("env.rewards", format!("{e}")))?],
    };
    let default_m = agent.m.unwrap_or(128);
    let agents: Vec<(AgentKind, usize)> = match suite.as_ref().and_then(|s| s.agents.clone()) {
        Some(list) => list.iter().map(|a| parse_agent_label(a, default_m).map_err(|e| field("suite.agents", e))).collect::<Result<_, _>>()?,
        None => {
            let label = agent.kind.as_deref().ok_or_else(|| field("agent.kind", "missing"))?;
            vec![parse_agent_label(label, default_m).map_err(|e| field("agent.kind", e))?]
        }
    };

    let run = file.run.unwrap_or_default();
    let n_updates = run.n_updates.unwrap_or(DEFAULT_N_UPDATES);
    let checkpoints = run.checkpoints.unwrap_or_else(|| {
        let mut c: Vec<usize> = DEFAULT_CHECKPOINTS.iter().copied().filter(|&c| c < n_updates).collect();
        c.push(n_updates);
        c
    });

    let mut out = Vec::new();
    for &t in &transitions {
        for &r in &rewards {
            let mut spec = EnvSpec::new(t, r);
            if let Some(v) = env.n_states {
                spec.n_states = v;
            }
            if let Some(v) = env.branching {
                spec.branching = v;
            }
            if let Some(v) = env.reward_scale {
                spec.reward_scale = v;
            }
            if let Some(v) = env.gamma {
                spec.gamma = v;
            }
            if let Some(v) = env.seed {
                spec.seed = v;
            }
            if let Some(v) = env.skew {
                spec.skew = v;
            }
            if let Some(v) = env.skew_prob {
                spec.skew_prob = v;
            }
            for &(kind, m) in &agents {
                let lr_grid = match &file.lr {
                    None => default_lr_grid(kind),
                    Some(LrSection { values: Some(v), min: None, max: None, count: None }) => {
                        if v.is_empty() {
                            return Err(field("lr.values", "learning-rate grid is empty"));
                        }
                        v.clone()
                    }
                    Some(LrSection { values: Some(_), .. }) => {
                        return Err(field("lr", "give either `values` or `min`/`max`/`count`, not both"))
                    }
                    Some(LrSection { min, max, count, .. }) => {
                        let default = default_lr_grid(kind);
                        let lo = min.unwrap_or(default[0]);
                        let hi = max.unwrap_or(default[default.len() - 1]);
                        let n = count.unwrap_or(LR_GRID_POINTS);
                        if n == 0 {
                            return Err(field("lr.count", "learning-rate grid is empty"));
                        }
                        if !(lo > 0.0 && hi >= lo) {
                            return Err(field("lr", format!("need 0 < min <= max, got min = {lo}, max = {hi}")));
                        }
                        log_spaced(lo, hi, n)
                    }
                };
                let cfg = ExperimentConfig {
                    env: spec.clone(),
                    agent: kind,
                    m,
                    lr_grid,
                    n_updates,
                    checkpoints: checkpoints.clone(),
                    n_runs: run.n_runs.unwrap_or(DEFAULT_N_RUNS),
                    base_seed: run.base_seed.unwrap_or(0),
                    start: run.start.unwrap_or_default(),
                    weighting: run.weighting.unwrap_or_default(),
                };
                cfg.validate()?;
                out.push(cfg);
            }
        }
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// An environment on disk: the generating spec (when known) and the
/// realized transition matrix and reward models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvFile {
    pub spec: Option<EnvSpec>,
    pub mrp: MrpRecord,
}

impl EnvFile {
    pub fn new<T: Real>(spec: Option<EnvSpec>, mrp: &Mrp<T>) -> Self {
        EnvFile { spec, mrp: mrp.to_record() }
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn mrp<T: Real>(&self) -> Result<Mrp<T>, ConfigError> {
        Ok(Mrp::from_record(&self.mrp)?)
    }

    /// Identifier for reports: the spec's id, or `custom`.
    pub fn env_id(&self) -> String {
        self.spec.as_ref().map_or_else(|| "custom".to_string(), EnvSpec::env_id)
    }
}
