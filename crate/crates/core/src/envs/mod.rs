//! Planar goal-conditioned manipulation tasks with sparse rewards and scripted experts.
//!
//! | task           | observation                                   | action                 |
//! |----------------|-----------------------------------------------|------------------------|
//! | `reach2d`      | effector (2)                                  | dx, dy                 |
//! | `pick_place2d` | effector (2), gripper, object (2)             | dx, dy, grip           |
//! | `handover2d`   | left effector, gripper, right effector, gripper, object | dx, dy, grip per arm |
//!
//! The full state vector is `observation ++ achieved_goal ++ desired_goal`, where the
//! achieved goal is the effector (reach) or the object position. Grip commands `> 0`
//! close the gripper. Rewards are 0 on success and -1 otherwise.

mod demos;
mod dynamics;
mod expert;

use serde::{Deserialize, Serialize};

use crate::buffers::{GoalLayout, SparseGoalReward};
use crate::error::Error;

pub use demos::{generate_demos, write_demos};
pub use dynamics::{env_reset, env_step, Holder, StepOutcome};
pub use expert::scripted_expert;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Reach2d,
    PickPlace2d,
    Handover2d,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Reach2d, EnvKind::PickPlace2d, EnvKind::Handover2d];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Reach2d => "reach2d",
            EnvKind::PickPlace2d => "pick_place2d",
            EnvKind::Handover2d => "handover2d",
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown environment `{s}` (expected reach2d, pick_place2d or handover2d)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub max_episode_steps: u32,
    pub success_threshold: f64,
    /// Effector displacement for a unit action component.
    pub action_scale: f64,
    pub grasp_radius: f64,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        let (obs_dim, action_dim) = match kind {
            EnvKind::Reach2d => (2, 2),
            EnvKind::PickPlace2d => (5, 3),
            EnvKind::Handover2d => (8, 6),
        };
        EnvSpec {
            kind,
            obs_dim,
            action_dim,
            goal_dim: 2,
            max_episode_steps: 50,
            success_threshold: 0.05,
            action_scale: 0.05,
            grasp_radius: 0.05,
        }
    }

    pub fn layout(&self) -> GoalLayout {
        GoalLayout { obs_dim: self.obs_dim, goal_dim: self.goal_dim }
    }

    pub fn state_dim(&self) -> usize {
        self.layout().state_dim()
    }

    pub fn reward_rule(&self) -> SparseGoalReward {
        SparseGoalReward { layout: self.layout(), success_threshold: self.success_threshold }
    }
}

/// Full simulator state. Positions live in the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// One effector for reach/pick-place, two (left, right) for handover.
    pub effectors: Vec<[f64; 2]>,
    /// `true` = closed; one per effector (unused for reach).
    pub grippers: Vec<bool>,
    pub object: Option<[f64; 2]>,
    pub holder: Holder,
    pub goal: [f64; 2],
    pub step_count: u32,
}

impl EnvState {
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(8);
        for (i, e) in self.effectors.iter().enumerate() {
            obs.extend_from_slice(e);
            if self.object.is_some() {
                obs.push(if self.grippers[i] { 1.0 } else { 0.0 });
            }
        }
        if let Some(o) = self.object {
            obs.extend_from_slice(&o);
        }
        obs
    }

    pub fn achieved_goal(&self) -> [f64; 2] {
        self.object.unwrap_or(self.effectors[0])
    }

    pub fn desired_goal(&self) -> [f64; 2] {
        self.goal
    }

    /// `observation ++ achieved_goal ++ desired_goal`.
    pub fn flat(&self) -> Vec<f64> {
        let mut s = self.observation();
        s.extend_from_slice(&self.achieved_goal());
        s.extend_from_slice(&self.goal);
        s
    }

    pub fn goal_distance(&self) -> f64 {
        dist(self.achieved_goal(), self.goal)
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_widths_match_spec() {
        for kind in EnvKind::ALL {
            let spec = EnvSpec::new(kind);
            let s = env_reset(&spec, 3);
            assert_eq!(s.observation().len(), spec.obs_dim, "{kind}");
            assert_eq!(s.flat().len(), spec.state_dim(), "{kind}");
            assert_eq!(scripted_expert(&spec, &s).len(), spec.action_dim, "{kind}");
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in EnvKind::ALL {
            assert_eq!(kind.name().parse::<EnvKind>().unwrap(), kind);
        }
        assert!("fetch".parse::<EnvKind>().is_err());
    }
}
