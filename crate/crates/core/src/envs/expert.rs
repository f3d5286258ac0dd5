use super::dynamics::{workspace, Holder, HANDOVER_LEFT_MAX, HANDOVER_RIGHT_MIN};
use super::{dist, EnvKind, EnvSpec, EnvState};

const OPEN: f64 = -1.0;
const CLOSE: f64 = 1.0;

/// Proportional move command from `from` toward `to`, saturated to `[-1, 1]`.
fn toward(spec: &EnvSpec, from: [f64; 2], to: [f64; 2]) -> [f64; 2] {
    [
        ((to[0] - from[0]) / spec.action_scale).clamp(-1.0, 1.0),
        ((to[1] - from[1]) / spec.action_scale).clamp(-1.0, 1.0),
    ]
}

/// Where an effector lands after a move command, before workspace clipping.
fn landing(spec: &EnvSpec, from: [f64; 2], cmd: [f64; 2]) -> [f64; 2] {
    [from[0] + spec.action_scale * cmd[0], from[1] + spec.action_scale * cmd[1]]
}

fn clip_to(spec: &EnvSpec, arm: usize, p: [f64; 2]) -> [f64; 2] {
    let (x0, x1, y0, y1) = workspace(spec.kind, arm);
    [p[0].clamp(x0, x1), p[1].clamp(y0, y1)]
}

/// Approach `target` with an open gripper and close on arrival within grasp range.
fn approach_and_grasp(spec: &EnvSpec, arm: usize, effector: [f64; 2], target: [f64; 2]) -> [f64; 3] {
    let mv = toward(spec, effector, target);
    let there = clip_to(spec, arm, landing(spec, effector, mv));
    let grip = if dist(there, target) <= 0.9 * spec.grasp_radius { CLOSE } else { OPEN };
    [mv[0], mv[1], grip]
}

/// Hand-written controller used to produce demonstrations.
pub fn scripted_expert(spec: &EnvSpec, state: &EnvState) -> Vec<f64> {
    match spec.kind {
        EnvKind::Reach2d => toward(spec, state.effectors[0], state.goal).to_vec(),
        EnvKind::PickPlace2d => {
            let e = state.effectors[0];
            let obj = state.object.expect("pick_place2d has an object");
            match state.holder {
                Holder::Effector(_) if dist(obj, state.goal) <= 0.5 * spec.success_threshold => vec![0.0, 0.0, OPEN],
                Holder::Effector(_) => {
                    let mv = toward(spec, e, state.goal);
                    vec![mv[0], mv[1], CLOSE]
                }
                Holder::Free => approach_and_grasp(spec, 0, e, obj).to_vec(),
            }
        }
        EnvKind::Handover2d => handover(spec, state),
    }
}

fn handover(spec: &EnvSpec, state: &EnvState) -> Vec<f64> {
    let (left, right) = (state.effectors[0], state.effectors[1]);
    let obj = state.object.expect("handover2d has an object");
    let meet = [0.5 * (HANDOVER_LEFT_MAX + HANDOVER_RIGHT_MIN), obj[1]];
    let mut a = vec![0.0; 6];
    match state.holder {
        Holder::Free => {
            let taker = if obj[0] >= HANDOVER_RIGHT_MIN + spec.grasp_radius { 1 } else { 0 };
            let cmd = approach_and_grasp(spec, taker, state.effectors[taker], obj);
            a[taker * 3..taker * 3 + 3].copy_from_slice(&cmd);
            let other = 1 - taker;
            let wait = toward(spec, state.effectors[other], if other == 1 { meet } else { state.effectors[other] });
            a[other * 3..other * 3 + 3].copy_from_slice(&[wait[0], wait[1], OPEN]);
        }
        Holder::Effector(0) => {
            // carry to the meeting point; right arm comes to meet and grabs when close
            let mv_left = toward(spec, left, meet);
            let right_ready = state.grippers[1] && dist(right, obj) <= spec.grasp_radius;
            a[..3].copy_from_slice(&[mv_left[0], mv_left[1], if right_ready { OPEN } else { CLOSE }]);
            if right_ready {
                a[3..].copy_from_slice(&[0.0, 0.0, CLOSE]);
            } else {
                let lands = clip_to(spec, 0, landing(spec, left, mv_left));
                let cmd = approach_and_grasp(spec, 1, right, lands);
                a[3..].copy_from_slice(&cmd);
            }
        }
        Holder::Effector(_) => {
            if dist(obj, state.goal) <= 0.5 * spec.success_threshold {
                a[3..].copy_from_slice(&[0.0, 0.0, OPEN]);
            } else {
                let mv = toward(spec, right, state.goal);
                a[3..].copy_from_slice(&[mv[0], mv[1], CLOSE]);
            }
            a[2] = OPEN;
        }
    }
    a
}
