use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, Demos, StepMetrics};
use crate::buffers::{ReplayBuffer, Transition};
use crate::envs::{env_reset, env_step, EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::par;

/// Outcome of evaluating a frozen policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Runs `n_episodes` deterministic rollouts on fresh environments seeded
/// `seed_base, seed_base + 1, ...`.
pub fn evaluate<F>(policy: F, spec: &EnvSpec, n_episodes: usize, seed_base: u64) -> Result<EvalResult>
where
    F: Fn(&EnvState) -> Result<Vec<f64>> + Sync + Send,
{
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let episodes = par::map_range(n_episodes, |i| -> Result<(bool, f64)> {
        let mut state = env_reset(spec, seed_base.wrapping_add(i as u64));
        let mut ret = 0.0;
        loop {
            let out = env_step(spec, &state, &policy(&state)?);
            ret += out.reward;
            if out.done {
                return Ok((out.success, ret));
            }
            state = out.state;
        }
    });
    let episodes = episodes.into_iter().collect::<Result<Vec<_>>>()?;
    let n = episodes.len() as f64;
    Ok(EvalResult {
        success_rate: episodes.iter().filter(|e| e.0).count() as f64 / n,
        mean_return: episodes.iter().map(|e| e.1).sum::<f64>() / n,
    })
}

/// Deterministic evaluation of an agent's current actor.
pub fn evaluate_agent(agent: &Agent, spec: &EnvSpec, n_episodes: usize, seed_base: u64) -> Result<EvalResult> {
    evaluate(|s| agent.act(&s.flat()), spec, n_episodes, seed_base)
}

/// One evaluation of the greedy policy, with update metrics averaged over the
/// window since the previous evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    /// Gradient steps taken in the window; metrics are zero when this is zero.
    pub updates: u64,
    pub metrics: StepMetrics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub curve: Vec<CurveRow>,
    pub episodes: u64,
    pub train_successes: u64,
}

impl TrainLog {
    pub fn final_point(&self) -> Option<&CurveRow> {
        self.curve.last()
    }
}

/// Settings for one training run that are not part of the agent itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub total_env_steps: u64,
    pub eval_every: u64,
    pub n_eval_episodes: usize,
    /// Seed of the first evaluation environment; subsequent ones increment.
    pub eval_seed_base: u64,
}

/// A training run in progress. Serializable, so a run can be checkpointed at any
/// step and resumed with an identical continuation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    agent: Agent,
    spec: EnvSpec,
    settings: RunSettings,
    replay: ReplayBuffer,
    env_rng: ChaCha8Rng,
    state: EnvState,
    episode_id: u64,
    step_index: u32,
    t: u64,
    update_credit: f64,
    window: StepMetrics,
    window_updates: u64,
    log: TrainLog,
}

fn accumulate(acc: &mut StepMetrics, m: &StepMetrics, scale: f64) {
    acc.critic_loss += scale * m.critic_loss;
    acc.actor_objective += scale * m.actor_objective;
    acc.q_mean += scale * m.q_mean;
    acc.target_mean += scale * m.target_mean;
    acc.actor_penalty += scale * m.actor_penalty;
}

impl Trainer {
    /// The environment stream is seeded from `env_seed`; the agent carries its own RNG.
    pub fn new(agent: Agent, spec: EnvSpec, settings: RunSettings, env_seed: u64) -> Result<Self> {
        if agent.state_dim() != spec.state_dim() || agent.action_dim() != spec.action_dim {
            return Err(Error::Shape(format!(
                "agent dims ({}, {}) do not match {} ({}, {})",
                agent.state_dim(),
                agent.action_dim(),
                spec.kind,
                spec.state_dim(),
                spec.action_dim
            )));
        }
        if settings.n_eval_episodes == 0 {
            return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
        }
        let replay = ReplayBuffer::new(agent.config().replay_capacity, spec.state_dim(), spec.action_dim)?;
        let mut env_rng = ChaCha8Rng::seed_from_u64(env_seed);
        let state = env_reset(&spec, env_rng.gen());
        Ok(Trainer {
            agent,
            spec,
            settings,
            replay,
            env_rng,
            state,
            episode_id: 0,
            step_index: 0,
            t: 0,
            update_credit: 0.0,
            window: StepMetrics::default(),
            window_updates: 0,
            log: TrainLog::default(),
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn steps_done(&self) -> u64 {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.settings.total_env_steps
    }

    pub fn into_parts(self) -> (Agent, TrainLog) {
        (self.agent, self.log)
    }

    /// One environment step, the updates it earns, and an evaluation when due.
    pub fn step(&mut self, demos: Demos<'_>) -> Result<()> {
        if self.is_finished() {
            return Err(Error::Precondition("training budget already spent".into()));
        }
        self.t += 1;
        let t = self.t;
        let cfg = self.agent.config();
        let (warmup, eps, batch_size, ups) = (cfg.warmup_steps, cfg.random_action_prob, cfg.batch_size, cfg.updates_per_step);
        let spec = self.spec;

        let flat = self.state.flat();
        let action = if t <= warmup || self.env_rng.gen::<f64>() < eps {
            (0..spec.action_dim).map(|_| self.env_rng.gen_range(-1.0..=1.0)).collect()
        } else {
            self.agent.select_action(&flat, true)?
        };
        let out = env_step(&spec, &self.state, &action);
        self.replay.push(Transition {
            state: flat,
            action,
            reward: out.reward,
            next_state: out.state.flat(),
            done: out.success,
            episode_id: self.episode_id,
            step_index: self.step_index,
        })?;
        self.step_index += 1;
        if out.done {
            self.log.episodes += 1;
            self.log.train_successes += u64::from(out.success);
            self.episode_id += 1;
            self.step_index = 0;
            self.state = env_reset(&spec, self.env_rng.gen());
        } else {
            self.state = out.state;
        }

        if t > warmup && self.replay.len() >= batch_size {
            self.update_credit += ups;
            while self.update_credit >= 1.0 {
                self.update_credit -= 1.0;
                let m = self.agent.train_step(&self.replay, demos)?;
                accumulate(&mut self.window, &m, 1.0);
                self.window_updates += 1;
            }
        }

        let every = self.settings.eval_every;
        if (every > 0 && t.is_multiple_of(every)) || t == self.settings.total_env_steps {
            let r = evaluate_agent(&self.agent, &spec, self.settings.n_eval_episodes, self.settings.eval_seed_base)?;
            let mut metrics = StepMetrics::default();
            if self.window_updates > 0 {
                accumulate(&mut metrics, &self.window, 1.0 / self.window_updates as f64);
            }
            self.log.curve.push(CurveRow {
                step: t,
                success_rate: r.success_rate,
                mean_return: r.mean_return,
                updates: self.window_updates,
                metrics,
            });
            self.window = StepMetrics::default();
            self.window_updates = 0;
        }
        Ok(())
    }

    /// Steps until `t` environment steps are done (capped at the budget).
    pub fn run_until(&mut self, t: u64, demos: Demos<'_>) -> Result<()> {
        while self.t < t.min(self.settings.total_env_steps) {
            self.step(demos)?;
        }
        Ok(())
    }

    pub fn run(&mut self, demos: Demos<'_>) -> Result<()> {
        self.run_until(self.settings.total_env_steps, demos)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs a full training budget from scratch.
pub fn train_agent(agent: Agent, spec: &EnvSpec, demos: Demos<'_>, settings: RunSettings, env_seed: u64) -> Result<(Agent, TrainLog)> {
    let mut trainer = Trainer::new(agent, *spec, settings, env_seed)?;
    trainer.run(demos)?;
    Ok(trainer.into_parts())
}
