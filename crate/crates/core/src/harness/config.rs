//! Experiment configuration as flat `section.key = value` lines.
//!
//! ```text
//! env = "pick_place2d"
//! agent.variant = "ac_ssil"
//! agent.alpha = 5.0
//! run.steps = 60000
//! demos.episodes = 100
//! ```
//!
//! Any key may be overridden with `key=value` strings; values use the same syntax
//! as the file, and bare words are read as strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::agent::{AgentConfig, Variant};
use crate::envs::{EnvKind, EnvSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Environment steps per seed.
    pub steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub eval_seed_base: u64,
    /// First seed; the run uses `seed, seed + 1, ..., seed + n_seeds - 1`.
    pub seed: u64,
    pub n_seeds: usize,
    /// Seeds trained concurrently; 0 means as many as the thread pool allows.
    pub workers: usize,
    /// Environment steps between resumable saves of each seed; 0 disables them.
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    /// State-only demo file. Generated from the scripted expert when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Action-labeled demo file for behaviour cloning. Generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_path: Option<PathBuf>,
    /// Episodes to generate when no file is given.
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub agent: AgentConfig,
    pub run: RunConfig,
    pub demos: DemoConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults for one task.
    pub fn for_env(env: EnvKind) -> Self {
        let steps = match env {
            EnvKind::Reach2d => 20_000,
            EnvKind::PickPlace2d => 60_000,
            EnvKind::Handover2d => 60_000,
        };
        ExperimentConfig {
            env,
            agent: AgentConfig::desk_scale(),
            run: RunConfig {
                steps,
                eval_every: 2_000,
                eval_episodes: 20,
                eval_seed_base: 1_000_000,
                seed: 0,
                n_seeds: 10,
                workers: 0,
                checkpoint_every: 20_000,
            },
            demos: DemoConfig { path: None, labeled_path: None, episodes: 100, seed: 12345 },
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec::new(self.env)
    }

    pub fn variant(&self) -> Variant {
        self.agent.variant
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run.n_seeds as u64).map(|i| self.run.seed + i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        let r = &self.run;
        if r.steps == 0 || r.eval_episodes == 0 || r.n_seeds == 0 {
            return Err(Error::Config("run.steps, run.eval_episodes and run.n_seeds must be positive".into()));
        }
        if r.seed.checked_add(r.n_seeds as u64).is_none() {
            return Err(Error::Config("seed range overflows".into()));
        }
        if self.demos.path.is_none() && self.demos.episodes == 0 && (self.variant().needs_expert() || self.variant().needs_actions()) {
            return Err(Error::Config(format!("variant {} needs demonstrations", self.variant())));
        }
        Ok(())
    }

    /// Resolves a config from optional file text plus `key=value` overrides. The
    /// environment is looked up first (override, then file, then `default_env`) so
    /// that its budget defaults apply underneath every other key.
    pub fn resolve(file_text: Option<&str>, overrides: &[String], default_env: EnvKind) -> Result<Self> {
        let mut layer = Table::new();
        if let Some(text) = file_text {
            let parsed: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
            merge(&mut layer, parsed);
        }
        for o in overrides {
            let (key, value) = parse_override(o)?;
            set_dotted(&mut layer, &key, value)?;
        }
        let env = match layer.get("env") {
            Some(Value::String(s)) => s.parse()?,
            Some(v) => return Err(Error::Config(format!("env must be a string, got {v}"))),
            None => default_env,
        };
        let mut base = Value::try_from(ExperimentConfig::for_env(env)).map_err(|e| Error::Config(e.to_string()))?;
        let Value::Table(ref mut table) = base else { unreachable!("config serializes to a table") };
        merge(table, layer);
        let config: ExperimentConfig = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String], default_env: EnvKind) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::resolve(Some(&text), overrides, default_env)
    }

    /// Applies `key=value` overrides to an existing config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        Self::resolve(Some(&self.to_text()), overrides, self.env)
    }

    /// Every resolved key as one `key = value` line, sorted.
    pub fn to_text(&self) -> String {
        let value = Value::try_from(self).expect("config is representable");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        v => out.push(format!("{prefix} = {v}")),
    }
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(a)), Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::Config(format!("malformed key `{key}`")));
        }
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let next = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match next {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("`{part}` in `{key}` is not a section"))),
        };
    }
    Ok(())
}

/// Splits `key=value`, reading the value as a config literal or else a bare string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}
