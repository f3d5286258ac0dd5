use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Where the goal slices live inside a flat state vector:
/// `state = observation ++ achieved_goal ++ desired_goal`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalLayout {
    pub obs_dim: usize,
    pub goal_dim: usize,
}

impl GoalLayout {
    pub fn state_dim(&self) -> usize {
        self.obs_dim + 2 * self.goal_dim
    }

    pub fn achieved<'a>(&self, state: &'a [f64]) -> &'a [f64] {
        &state[self.obs_dim..self.obs_dim + self.goal_dim]
    }

    pub fn desired<'a>(&self, state: &'a [f64]) -> &'a [f64] {
        &state[self.obs_dim + self.goal_dim..self.state_dim()]
    }

    pub fn desired_mut<'a>(&self, state: &'a mut [f64]) -> &'a mut [f64] {
        let end = self.state_dim();
        &mut state[self.obs_dim + self.goal_dim..end]
    }
}

/// The sparse goal-reaching reward: 0 within `success_threshold` of the goal, -1 otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseGoalReward {
    pub layout: GoalLayout,
    pub success_threshold: f64,
}

impl SparseGoalReward {
    pub fn reward(&self, achieved: &[f64], desired: &[f64]) -> f64 {
        let d2: f64 = achieved.iter().zip(desired).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2.sqrt() <= self.success_threshold {
            0.0
        } else {
            -1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Set only on success-terminal steps; time-limit truncation keeps bootstrapping.
    pub done: bool,
    pub episode_id: u64,
    pub step_index: u32,
}

/// Column-stacked view of a list of transitions, ready for network passes.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

impl TransitionBatch {
    pub fn from_transitions(items: &[Transition]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Precondition("empty batch".into()))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let n = items.len();
        let mut states = Vec::with_capacity(n * sd);
        let mut next_states = Vec::with_capacity(n * sd);
        let mut actions = Vec::with_capacity(n * ad);
        for t in items {
            if t.state.len() != sd || t.next_state.len() != sd || t.action.len() != ad {
                return Err(shape_err!("ragged transition batch"));
            }
            states.extend_from_slice(&t.state);
            next_states.extend_from_slice(&t.next_state);
            actions.extend_from_slice(&t.action);
        }
        Ok(TransitionBatch {
            states: Array2::from_shape_vec((n, sd), states).expect("sized"),
            actions: Array2::from_shape_vec((n, ad), actions).expect("sized"),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: Array2::from_shape_vec((n, sd), next_states).expect("sized"),
            dones: items.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct EpisodeSpan {
    id: u64,
    /// Global push index of the first step.
    start: u64,
    len: u64,
}

impl EpisodeSpan {
    fn end(&self) -> u64 {
        self.start + self.len
    }
}

/// Bounded FIFO store of agent experience with episode spans for hindsight relabeling.
///
/// Columns are kept in flat vectors rather than one small allocation per step:
/// interleaving millions of tiny long-lived allocations with the large temporaries
/// of network updates fragments the heap badly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    next_states: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    episode_ids: Vec<u64>,
    step_indices: Vec<u32>,
    pushed: u64,
    episodes: VecDeque<EpisodeSpan>,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 100_000;

    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            next_states: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            episode_ids: Vec::new(),
            step_indices: Vec::new(),
            pushed: 0,
            episodes: VecDeque::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn oldest(&self) -> u64 {
        self.pushed - self.len() as u64
    }

    fn row(&self, global: u64) -> usize {
        (global % self.capacity as u64) as usize
    }

    fn next_state_at(&self, global: u64) -> &[f64] {
        let i = self.row(global) * self.state_dim;
        &self.next_states[i..i + self.state_dim]
    }

    fn slot(&self, global: u64) -> Transition {
        let i = self.row(global);
        let (sd, ad) = (self.state_dim, self.action_dim);
        Transition {
            state: self.states[i * sd..(i + 1) * sd].to_vec(),
            action: self.actions[i * ad..(i + 1) * ad].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * sd..(i + 1) * sd].to_vec(),
            done: self.dones[i],
            episode_id: self.episode_ids[i],
            step_index: self.step_indices[i],
        }
    }

    /// Global index one past the last step of every episode still (partly) stored.
    pub fn episode_boundaries(&self) -> Vec<u64> {
        self.episodes.iter().map(EpisodeSpan::end).collect()
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        (self.oldest()..self.pushed).map(move |g| self.slot(g))
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.state_dim || t.next_state.len() != self.state_dim {
            return Err(shape_err!(
                "transition states have widths {}/{}, buffer expects {}",
                t.state.len(),
                t.next_state.len(),
                self.state_dim
            ));
        }
        if t.action.len() != self.action_dim {
            return Err(shape_err!("action width {} but buffer expects {}", t.action.len(), self.action_dim));
        }
        match self.episodes.back_mut() {
            Some(span) if span.id == t.episode_id && span.end() == self.pushed => span.len += 1,
            _ => self.episodes.push_back(EpisodeSpan { id: t.episode_id, start: self.pushed, len: 1 }),
        }
        if self.len() < self.capacity {
            if self.rewards.capacity() < self.capacity {
                self.reserve_all();
            }
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.next_states.extend_from_slice(&t.next_state);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
            self.episode_ids.push(t.episode_id);
            self.step_indices.push(t.step_index);
        } else {
            let i = self.row(self.pushed);
            let (sd, ad) = (self.state_dim, self.action_dim);
            self.states[i * sd..(i + 1) * sd].copy_from_slice(&t.state);
            self.actions[i * ad..(i + 1) * ad].copy_from_slice(&t.action);
            self.next_states[i * sd..(i + 1) * sd].copy_from_slice(&t.next_state);
            self.rewards[i] = t.reward;
            self.dones[i] = t.done;
            self.episode_ids[i] = t.episode_id;
            self.step_indices[i] = t.step_index;
        }
        self.pushed += 1;
        let oldest = self.oldest();
        while self.episodes.front().is_some_and(|s| s.end() <= oldest) {
            self.episodes.pop_front();
        }
        Ok(())
    }

    /// One allocation per column for the whole capacity, so filling never reallocates.
    fn reserve_all(&mut self) {
        let room = self.capacity - self.len();
        self.states.reserve_exact(room * self.state_dim);
        self.actions.reserve_exact(room * self.action_dim);
        self.next_states.reserve_exact(room * self.state_dim);
        self.rewards.reserve_exact(room);
        self.dones.reserve_exact(room);
        self.episode_ids.reserve_exact(room);
        self.step_indices.reserve_exact(room);
    }

    fn span_of(&self, global: u64) -> &EpisodeSpan {
        let i = self.episodes.partition_point(|s| s.start <= global) - 1;
        &self.episodes[i]
    }

    /// Uniform sampling with replacement and "future" hindsight relabeling.
    ///
    /// With probability `her_ratio` an item's desired goal (in both `state` and
    /// `next_state`) is replaced by the goal achieved after a uniformly chosen step
    /// `f >= t` of the same episode; reward and `done` are recomputed from `rule`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        her_ratio: f64,
        rule: &SparseGoalReward,
        rng: &mut R,
    ) -> Result<Vec<Transition>> {
        if self.is_empty() {
            return Err(Error::Precondition("cannot sample from an empty replay buffer".into()));
        }
        if !(0.0..=1.0).contains(&her_ratio) {
            return Err(Error::InvalidArgument(format!("her_ratio must be in [0, 1], got {her_ratio}")));
        }
        if rule.layout.state_dim() != self.state_dim {
            return Err(shape_err!("goal layout covers {} dims, states have {}", rule.layout.state_dim(), self.state_dim));
        }
        let oldest = self.oldest();
        let n = self.len() as u64;
        let layout = rule.layout;
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let g = oldest + rng.gen_range(0..n);
            let mut t = self.slot(g);
            if her_ratio > 0.0 && rng.gen::<f64>() < her_ratio {
                let span = self.span_of(g);
                let future = rng.gen_range(g..span.end());
                let goal = layout.achieved(self.next_state_at(future)).to_vec();
                layout.desired_mut(&mut t.state).copy_from_slice(&goal);
                layout.desired_mut(&mut t.next_state).copy_from_slice(&goal);
                t.reward = rule.reward(layout.achieved(&t.next_state), &goal);
                t.done = t.reward == 0.0;
            }
            out.push(t);
        }
        Ok(out)
    }
}
