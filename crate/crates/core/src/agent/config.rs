use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssil::{LabelWeighting, SsilConfig};

/// Which learning rule the agent runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain deterministic actor-critic.
    BaseAc,
    /// Pseudo-label regularizer on the actor only.
    ActorSsil,
    /// Pseudo-label regularizer on both actor and critic target.
    AcSsil,
    /// Behaviour cloning on action-labeled demonstrations.
    AcBc,
    /// Critic trained on rewards shaped by distance to demonstrated transitions.
    AcStd,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::BaseAc, Variant::ActorSsil, Variant::AcSsil, Variant::AcBc, Variant::AcStd];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaseAc => "base_ac",
            Variant::ActorSsil => "actor_ssil",
            Variant::AcSsil => "ac_ssil",
            Variant::AcBc => "ac_bc",
            Variant::AcStd => "ac_std",
        }
    }

    /// Needs the state-only expert buffer.
    pub fn needs_expert(self) -> bool {
        matches!(self, Variant::ActorSsil | Variant::AcSsil | Variant::AcStd)
    }

    /// Needs action-labeled demonstrations.
    pub fn needs_actions(self) -> bool {
        matches!(self, Variant::AcBc)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub variant: Variant,
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub k: usize,
    pub label_weighting: LabelWeighting,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    /// Hidden layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    /// Gaussian action noise, in action units.
    pub exploration_noise_std: f64,
    /// Probability of a uniformly random action while exploring.
    pub random_action_prob: f64,
    /// Environment steps collected before the first update.
    pub warmup_steps: u64,
    /// Gradient steps per environment step after warm-up.
    pub updates_per_step: f64,
    pub her_ratio: f64,
    pub replay_capacity: usize,
    /// Bonus scale for the shaped-reward baseline.
    pub std_lambda: f64,
    /// Distance decay for the shaped-reward baseline.
    pub std_beta: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            variant: Variant::AcSsil,
            gamma: 0.99,
            tau: 0.005,
            alpha: 5.0,
            k: 5,
            label_weighting: LabelWeighting::Uniform,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 256,
            hidden: vec![256, 256, 256],
            exploration_noise_std: 0.1,
            random_action_prob: 0.1,
            warmup_steps: 1000,
            updates_per_step: 1.0,
            her_ratio: 0.8,
            replay_capacity: 100_000,
            std_lambda: 1.0,
            std_beta: 1.0,
        }
    }
}

impl AgentConfig {
    /// Smaller networks and batches sized for single-core runs of a few minutes.
    /// Small nets explore less on their own, hence the wider noise. At this scale
    /// alpha = 5 swamps the -1 step reward and the policy collapses, so it is 0.1.
    pub fn desk_scale() -> Self {
        AgentConfig {
            alpha: 0.1,
            hidden: vec![64, 64],
            batch_size: 64,
            exploration_noise_std: 0.2,
            random_action_prob: 0.3,
            ..Default::default()
        }
    }

    pub fn ssil(&self) -> SsilConfig {
        SsilConfig { k: self.k, alpha: self.alpha, weighting: self.label_weighting }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        self.ssil().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if self.exploration_noise_std.is_nan() || self.exploration_noise_std < 0.0 || !(0.0..=1.0).contains(&self.random_action_prob) {
            return bad("exploration settings out of range".into());
        }
        if !(0.0..=1.0).contains(&self.her_ratio) {
            return bad(format!("her_ratio must lie in [0, 1], got {}", self.her_ratio));
        }
        if !(self.updates_per_step >= 0.0 && self.updates_per_step.is_finite()) {
            return bad("updates_per_step must be finite and non-negative".into());
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity must be positive".into());
        }
        if !(self.std_lambda >= 0.0 && self.std_beta >= 0.0) {
            return bad("shaping parameters must be non-negative".into());
        }
        Ok(())
    }
}
