//! Deterministic actor-critic learner and its demonstration-guided variants.

mod config;
mod learner;

pub use config::{AgentConfig, Variant};
pub use learner::{std_shaped_reward, Agent, Demos, StepMetrics};
