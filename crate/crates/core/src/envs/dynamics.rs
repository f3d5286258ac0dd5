use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dist, EnvKind, EnvSpec, EnvState};

/// Which effector, if any, is carrying the object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holder {
    Free,
    Effector(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    /// `success` or the step limit was hit.
    pub done: bool,
    pub success: bool,
}

impl StepOutcome {
    /// Episode ended on the step limit rather than on success.
    pub fn truncated(&self) -> bool {
        self.done && !self.success
    }
}

/// Margin kept between sampled positions and the workspace edge.
const MARGIN: f64 = 0.05;
/// Minimum distance between sampled entities that must not start in contact.
const MIN_SEPARATION: f64 = 0.1;
/// Overlap band of the two handover arms: left arm x <= 0.55, right arm x >= 0.45.
pub(crate) const HANDOVER_LEFT_MAX: f64 = 0.55;
pub(crate) const HANDOVER_RIGHT_MIN: f64 = 0.45;

/// Box an effector may occupy: `(x_min, x_max, y_min, y_max)`.
pub(crate) fn workspace(kind: EnvKind, effector: usize) -> (f64, f64, f64, f64) {
    match (kind, effector) {
        (EnvKind::Handover2d, 0) => (0.0, HANDOVER_LEFT_MAX, 0.0, 1.0),
        (EnvKind::Handover2d, _) => (HANDOVER_RIGHT_MIN, 1.0, 0.0, 1.0),
        _ => (0.0, 1.0, 0.0, 1.0),
    }
}

fn sample_in(rng: &mut ChaCha8Rng, x: (f64, f64), y: (f64, f64)) -> [f64; 2] {
    [rng.gen_range(x.0..x.1), rng.gen_range(y.0..y.1)]
}

/// Rejection-samples a point inside the box whose distance to `center` lies in `radius`.
fn sample_near(rng: &mut ChaCha8Rng, center: [f64; 2], radius: (f64, f64), x: (f64, f64), y: (f64, f64)) -> [f64; 2] {
    let xs = (x.0.max(center[0] - radius.1), x.1.min(center[0] + radius.1));
    let ys = (y.0.max(center[1] - radius.1), y.1.min(center[1] + radius.1));
    loop {
        let p = sample_in(rng, xs, ys);
        let d = dist(p, center);
        if d >= radius.0 && d <= radius.1 {
            return p;
        }
    }
}

/// Object spawns this far from the (first) effector, goal this far from the object.
const OBJECT_RADIUS: (f64, f64) = (MIN_SEPARATION, 0.3);
const GOAL_RADIUS: (f64, f64) = (MIN_SEPARATION, 0.3);

/// Samples a fresh episode. Deterministic in `seed`.
pub fn env_reset(spec: &EnvSpec, seed: u64) -> EnvState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = (MARGIN, 1.0 - MARGIN);
    match spec.kind {
        EnvKind::Reach2d => loop {
            let e = sample_in(&mut rng, full, full);
            let g = sample_in(&mut rng, full, full);
            if dist(e, g) > MIN_SEPARATION {
                return EnvState {
                    effectors: vec![e],
                    grippers: vec![false],
                    object: None,
                    holder: Holder::Free,
                    goal: g,
                    step_count: 0,
                };
            }
        },
        EnvKind::PickPlace2d => {
            let e = sample_in(&mut rng, full, full);
            let o = sample_near(&mut rng, e, OBJECT_RADIUS, full, full);
            let g = sample_near(&mut rng, o, GOAL_RADIUS, full, full);
            EnvState { effectors: vec![e], grippers: vec![false], object: Some(o), holder: Holder::Free, goal: g, step_count: 0 }
        }
        EnvKind::Handover2d => {
            let band = (0.25, 0.75);
            let a = sample_in(&mut rng, (0.2, 0.4), band);
            let b = sample_in(&mut rng, (0.6, 0.8), band);
            let o = sample_near(&mut rng, a, OBJECT_RADIUS, (0.15, 0.4), band);
            let g = sample_in(&mut rng, (0.6, 0.85), band);
            EnvState {
                effectors: vec![a, b],
                grippers: vec![false, false],
                object: Some(o),
                holder: Holder::Free,
                goal: g,
                step_count: 0,
            }
        }
    }
}

/// Advances one step. Actions are clipped to `[-1, 1]`; missing trailing entries read as 0.
pub fn env_step(spec: &EnvSpec, state: &EnvState, action: &[f64]) -> StepOutcome {
    let act = |i: usize| action.get(i).copied().unwrap_or(0.0).clamp(-1.0, 1.0);
    let mut next = state.clone();
    let per_arm = if next.object.is_some() { 3 } else { 2 };

    for (i, e) in next.effectors.iter_mut().enumerate() {
        let (x0, x1, y0, y1) = workspace(spec.kind, i);
        e[0] = (e[0] + spec.action_scale * act(i * per_arm)).clamp(x0, x1);
        e[1] = (e[1] + spec.action_scale * act(i * per_arm + 1)).clamp(y0, y1);
    }
    if let Some(obj) = next.object {
        for (i, g) in next.grippers.iter_mut().enumerate() {
            *g = act(i * per_arm + 2) > 0.0;
        }
        // the current holder keeps the object while its gripper stays closed
        next.holder = match state.holder {
            Holder::Effector(i) if next.grippers[i] => Holder::Effector(i),
            _ => (0..next.effectors.len())
                .find(|&i| next.grippers[i] && dist(next.effectors[i], obj) <= spec.grasp_radius)
                .map_or(Holder::Free, Holder::Effector),
        };
        if let Holder::Effector(i) = next.holder {
            next.object = Some(next.effectors[i]);
        }
    }
    next.step_count += 1;

    let success = next.goal_distance() <= spec.success_threshold;
    let reward = if success { 0.0 } else { -1.0 };
    let done = success || next.step_count >= spec.max_episode_steps;
    StepOutcome { state: next, reward, done, success }
}
