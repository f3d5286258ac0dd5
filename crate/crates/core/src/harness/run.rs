use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::rollout::{CurveRow, RunSettings, TrainLog, Trainer};
use crate::agent::{Agent, Demos};
use crate::buffers::{ActionDemos, DemoFile, ExpertBuffer};
use crate::envs::{generate_demos, EnvKind};
use crate::error::{Error, Result};

/// Column order of every per-seed metrics CSV.
pub const METRICS_COLUMNS: [&str; 9] = [
    "step",
    "eval_success",
    "eval_return",
    "updates",
    "critic_loss",
    "actor_objective",
    "q_mean",
    "target_mean",
    "actor_penalty",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeedOutcome {
    Completed { final_success: f64, final_return: f64, train_episodes: u64, train_successes: u64, curve: Vec<CurveRow> },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: SeedOutcome,
}

/// Mean and population standard deviation over completed seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub completed: usize,
    pub missing_seeds: Vec<u64>,
    pub success_mean: f64,
    pub success_std: f64,
    pub return_mean: f64,
    pub return_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub aggregate: Aggregate,
}

/// `(mean, population std)`; `(NaN, NaN)` for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_seeds(seeds: &[SeedReport]) -> Self {
        let mut succ = Vec::new();
        let mut ret = Vec::new();
        let mut missing = Vec::new();
        for s in seeds {
            match &s.outcome {
                SeedOutcome::Completed { final_success, final_return, .. } => {
                    succ.push(*final_success);
                    ret.push(*final_return);
                }
                SeedOutcome::Failed { .. } => missing.push(s.seed),
            }
        }
        let (success_mean, success_std) = mean_std(&succ);
        let (return_mean, return_std) = mean_std(&ret);
        Aggregate { completed: succ.len(), missing_seeds: missing, success_mean, success_std, return_mean, return_std }
    }
}

impl EvalReport {
    pub fn failed_seeds(&self) -> &[u64] {
        &self.aggregate.missing_seeds
    }

    pub fn final_successes(&self) -> Vec<f64> {
        self.seeds
            .iter()
            .filter_map(|s| match s.outcome {
                SeedOutcome::Completed { final_success, .. } => Some(final_success),
                SeedOutcome::Failed { .. } => None,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes via a temporary sibling and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Renders rows as CSV text.
pub(crate) fn csv_text<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

pub fn metrics_csv(log: &TrainLog) -> Result<String> {
    csv_text(
        &METRICS_COLUMNS,
        log.curve.iter().map(|r| {
            let m = &r.metrics;
            [r.step as f64, r.success_rate, r.mean_return, r.updates as f64, m.critic_loss, m.actor_objective, m.q_mean, m.target_mean, m.actor_penalty]
                .map(|v| v.to_string())
        }),
    )
}

/// Demonstration data resolved for a config, owned so seeds can share it.
pub struct DemoSet {
    pub expert: Option<ExpertBuffer>,
    pub labeled: Option<ActionDemos>,
}

impl DemoSet {
    pub fn demos(&self) -> Demos<'_> {
        Demos { expert: self.expert.as_ref(), labeled: self.labeled.as_ref() }
    }
}

fn load_demo_file(path: &Path, env: EnvKind) -> Result<DemoFile> {
    let file = DemoFile::load(path)?;
    let spec = crate::envs::EnvSpec::new(env);
    if file.state_dim != spec.state_dim() {
        return Err(Error::Config(format!(
            "{} holds {}-dimensional states, {env} needs {}",
            path.display(),
            file.state_dim,
            spec.state_dim()
        )));
    }
    Ok(file)
}

/// Loads the demo files named in the config, generating from the scripted expert
/// for any that are not given. Only what the variant uses is built.
pub fn resolve_demos(config: &ExperimentConfig) -> Result<DemoSet> {
    let variant = config.variant();
    let spec = config.spec();
    let d = &config.demos;
    let expert = if variant.needs_expert() {
        let file = match &d.path {
            Some(p) => load_demo_file(p, config.env)?,
            None => generate_demos(&spec, d.episodes, d.seed, false)?,
        };
        Some(ExpertBuffer::from_demo_file(&file, None)?)
    } else {
        None
    };
    let labeled = if variant.needs_actions() {
        let file = match &d.labeled_path {
            Some(p) => load_demo_file(p, config.env)?,
            None => generate_demos(&spec, d.episodes, d.seed, true)?,
        };
        Some(ActionDemos::from_file(&file)?)
    } else {
        None
    };
    Ok(DemoSet { expert, labeled })
}

/// Agent and environment seeds for one run seed.
pub fn seed_streams(seed: u64) -> (u64, u64) {
    (seed, seed ^ 0x9E37_79B9_7F4A_7C15)
}

pub fn settings(config: &ExperimentConfig) -> RunSettings {
    RunSettings {
        total_env_steps: config.run.steps,
        eval_every: config.run.eval_every,
        n_eval_episodes: config.run.eval_episodes,
        eval_seed_base: config.run.eval_seed_base,
    }
}

/// A fresh trainer for one seed.
pub fn new_trainer(config: &ExperimentConfig, seed: u64) -> Result<Trainer> {
    let spec = config.spec();
    let (agent_seed, env_seed) = seed_streams(seed);
    let agent = Agent::new(config.agent.clone(), spec.state_dim(), spec.action_dim, spec.reward_rule(), agent_seed)?;
    Trainer::new(agent, spec, settings(config), env_seed)
}

/// Trains one seed from scratch.
pub fn train_seed(config: &ExperimentConfig, demos: &DemoSet, seed: u64) -> Result<(Agent, TrainLog)> {
    let mut trainer = new_trainer(config, seed)?;
    trainer.run(demos.demos())?;
    Ok(trainer.into_parts())
}

/// Mid-run state of one seed, tagged with the config it belongs to.
#[derive(Serialize, Deserialize)]
struct SeedCheckpoint {
    config: ExperimentConfig,
    seed: u64,
    trainer: Trainer,
}

/// Trains one seed, saving its full state every `run.checkpoint_every` steps and
/// picking up from such a save when one for the same config and seed exists. The
/// resumed run produces exactly the log an uninterrupted one would.
pub fn train_seed_resumable(config: &ExperimentConfig, demos: &DemoSet, seed: u64, out_dir: &Path) -> Result<(Agent, TrainLog)> {
    let path = trainer_checkpoint_path(out_dir, seed);
    let saved = std::fs::read_to_string(&path)
        .ok()
        .and_then(|text| serde_json::from_str::<SeedCheckpoint>(&text).ok())
        .filter(|c| c.config == *config && c.seed == seed);
    let mut trainer = match saved {
        Some(c) => {
            info!("{} {} seed {seed}: resuming at step {}", config.env, config.variant(), c.trainer.steps_done());
            c.trainer
        }
        None => new_trainer(config, seed)?,
    };
    let every = config.run.checkpoint_every;
    if every > 0 {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    while !trainer.is_finished() {
        let next = trainer.steps_done().checked_div(every).map_or(u64::MAX, |q| (q + 1) * every);
        trainer.run_until(next, demos.demos())?;
        if every > 0 && !trainer.is_finished() {
            let c = SeedCheckpoint { config: config.clone(), seed, trainer };
            write_atomic(&path, &serde_json::to_string(&c)?)?;
            trainer = c.trainer;
        }
    }
    if path.exists() {
        std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
    }
    Ok(trainer.into_parts())
}

/// Saved agent together with the task it was trained on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub env: EnvKind,
    pub agent: Agent,
}

impl AgentCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn seed_csv_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}.csv"))
}

pub fn checkpoint_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}.agent.json"))
}

/// The trained actor in the plain network text format.
pub fn actor_text_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}.actor.txt"))
}

pub fn trainer_checkpoint_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}.resume.json"))
}

pub fn report_path(out_dir: &Path) -> PathBuf {
    out_dir.join("report.json")
}

fn run_seed(config: &ExperimentConfig, demos: &DemoSet, seed: u64, out_dir: &Path) -> Result<SeedOutcome> {
    let (agent, log) = train_seed_resumable(config, demos, seed, out_dir)?;
    write_atomic(&seed_csv_path(out_dir, seed), &metrics_csv(&log)?)?;
    write_atomic(&actor_text_path(out_dir, seed), &crate::nn::checkpoint::to_text(agent.actor()))?;
    AgentCheckpoint { env: config.env, agent }.save(&checkpoint_path(out_dir, seed))?;
    let last = log.final_point().ok_or_else(|| Error::Precondition("run produced no evaluation".into()))?;
    Ok(SeedOutcome::Completed {
        final_success: last.success_rate,
        final_return: last.mean_return,
        train_episodes: log.episodes,
        train_successes: log.train_successes,
        curve: log.curve.clone(),
    })
}

fn in_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

/// Trains every seed of `config`, writing `seed_<s>.csv`, `seed_<s>.agent.json` and
/// `report.json` (with the resolved config embedded) into `out_dir`. A failing seed
/// is recorded in the report rather than aborting the others.
pub fn run_training(config: &ExperimentConfig, out_dir: &Path) -> Result<EvalReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_atomic(&out_dir.join("config.txt"), &config.to_text())?;
    let demos = resolve_demos(config)?;
    let seeds = config.seeds();
    let outcomes: Vec<SeedOutcome> = in_pool(config.run.workers, || {
        crate::par::map_range(seeds.len(), |i| {
            let seed = seeds[i];
            match run_seed(config, &demos, seed, out_dir) {
                Ok(o) => {
                    info!("{} {} seed {seed} done", config.env, config.variant());
                    o
                }
                Err(e) => {
                    warn!("{} {} seed {seed} failed: {e}", config.env, config.variant());
                    SeedOutcome::Failed { error: e.to_string() }
                }
            }
        })
    });
    let seeds: Vec<SeedReport> = seeds.iter().zip(outcomes).map(|(&seed, outcome)| SeedReport { seed, outcome }).collect();
    let report = EvalReport { config: config.clone(), aggregate: Aggregate::from_seeds(&seeds), seeds };
    write_atomic(&report_path(out_dir), &report.to_json())?;
    Ok(report)
}
