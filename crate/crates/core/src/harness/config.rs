use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{config_err, Result};
use crate::scenarios::{CheckpointSchedule, MethodKind, ScenarioConfig};

/// A built-in scenario by name, or a full definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    Named(String),
    Inline(Box<ScenarioConfig>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodKind>,
    pub episodes: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checkpoints: CheckpointSchedule,
    /// Output directory; nothing is written when absent.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Fill the `wall_ms` column. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub save_trajectories: bool,
    /// Dotted-key overrides applied to the resolved configuration,
    /// e.g. `scenario.noise_var = 0`.
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
}

fn default_methods() -> Vec<MethodKind> {
    vec![MethodKind::Task, MethodKind::Random, MethodKind::Uniform]
}

fn default_trials() -> usize {
    1
}

impl RunConfig {
    pub fn new(scenario: &str, episodes: usize, trials: usize) -> Self {
        Self {
            scenario: ScenarioSpec::Named(scenario.to_string()),
            methods: default_methods(),
            episodes,
            trials,
            seed: 0,
            checkpoints: CheckpointSchedule::default(),
            out: None,
            jobs: None,
            timing: false,
            save_trajectories: false,
            overrides: BTreeMap::new(),
        }
    }

    /// Reads a TOML or JSON file, chosen by extension.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display()))),
            _ => serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_err("trials must be at least 1"));
        }
        if self.episodes == 0 {
            return Err(config_err("episodes must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("at least one method is required"));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(config_err("methods must not repeat"));
        }
        if self.jobs == Some(0) {
            return Err(config_err("jobs must be at least 1"));
        }
        Ok(())
    }

    /// Scenario definition with overrides applied.
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        match self.resolved()?.scenario {
            ScenarioSpec::Inline(cfg) => Ok(*cfg),
            ScenarioSpec::Named(_) => unreachable!("resolved configs are inline"),
        }
    }

    /// Every default materialized: the scenario inline and overrides applied.
    pub fn resolved(&self) -> Result<Self> {
        let mut base = self.clone();
        if let ScenarioSpec::Named(name) = &base.scenario {
            base.scenario = ScenarioSpec::Inline(Box::new(ScenarioConfig::builtin(name)?));
        }
        let overrides = std::mem::take(&mut base.overrides);
        if overrides.is_empty() {
            return Ok(base);
        }
        let mut tree = serde_json::to_value(&base)?;
        for (key, value) in &overrides {
            apply_override(&mut tree, key, value.clone())?;
        }
        let out: Self = serde_json::from_value(tree).map_err(|e| config_err(format!("invalid override: {e}")))?;
        out.validate()?;
        Ok(out)
    }
}

/// Sets the dotted `key` in `tree`. Every path segment must already exist so
/// that typos fail loudly.
pub fn apply_override(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let slot = match node {
            Value::Object(map) => map.get_mut(*part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|j| items.get_mut(j)),
            _ => None,
        };
        node = slot.ok_or_else(|| config_err(format!("unknown configuration key '{}'", parts[..=i].join("."))))?;
    }
    *node = value;
    Ok(())
}

/// Parses a `key=value` override; the value is JSON when it parses as such
/// and a string otherwise.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("override '{spec}' is not of the form key=value")))?;
    let v = v.trim();
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// `pow2`, `every:N`, or a comma-separated list of episode counts.
pub fn parse_checkpoints(s: &str) -> Result<CheckpointSchedule> {
    let s = s.trim();
    if s == "pow2" {
        return Ok(CheckpointSchedule::PowersOfTwo);
    }
    if let Some(n) = s.strip_prefix("every:") {
        return n
            .parse()
            .map(CheckpointSchedule::Every)
            .map_err(|_| config_err(format!("bad checkpoint spacing '{n}'")));
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| config_err(format!("bad checkpoint '{t}'"))))
        .collect::<Result<Vec<_>>>()
        .map(CheckpointSchedule::List)
}
