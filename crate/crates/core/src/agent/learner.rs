use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{AgentConfig, Variant};
use crate::buffers::{ActionDemos, ExpertBuffer, ReplayBuffer, SparseGoalReward, TransitionBatch};
use crate::error::{shape_err, Error, Result};
use crate::nn::{adam_step, soft_update, AdamState, Gradients, Mlp, OutputSquash};
use crate::ssil::{pseudo_actions, row_distances, ssil_actor_penalty};

/// Demonstration data available to an update.
#[derive(Clone, Copy, Debug, Default)]
pub struct Demos<'a> {
    pub expert: Option<&'a ExpertBuffer>,
    pub labeled: Option<&'a ActionDemos>,
}

impl<'a> Demos<'a> {
    pub fn none() -> Self {
        Demos::default()
    }

    fn expert(&self, variant: Variant) -> Result<&'a ExpertBuffer> {
        self.expert
            .ok_or_else(|| Error::Config(format!("variant {variant} requires a state-only expert buffer")))
    }

    fn labeled(&self, variant: Variant) -> Result<&'a ActionDemos> {
        self.labeled
            .ok_or_else(|| Error::Config(format!("variant {variant} requires action-labeled demonstrations")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub critic_loss: f64,
    pub actor_objective: f64,
    /// Mean `Q(s, a)` over the sampled batch before the critic step.
    pub q_mean: f64,
    pub target_mean: f64,
    /// Mean regularizer value in the actor objective (0 for variants without one).
    pub actor_penalty: f64,
}

/// Actor, critic and their target copies, with optimizer state and the agent's RNG.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Agent {
    config: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    goal_rule: SparseGoalReward,
    actor: Mlp,
    critic: Mlp,
    target_actor: Mlp,
    target_critic: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    rng: ChaCha8Rng,
    updates: u64,
}

/// `bonus = lambda * exp(-beta * d)` where `d` is the distance from `(s, s_next)` to the
/// nearest demonstrated transition.
pub fn std_shaped_reward(expert: &ExpertBuffer, state: &[f64], next_state: &[f64], lambda: f64, beta: f64) -> Result<f64> {
    let d = expert.nearest_transition_distance(state, next_state)?;
    Ok(lambda * (-beta * d).exp())
}

fn hstack<'a>(a: ArrayView2<'a, f64>, b: ArrayView2<'a, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("row counts match")
}

fn add_grads(into: &mut Gradients, other: &Gradients) {
    for (a, b) in into.tensors_mut().zip(other.tensors()) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

impl Agent {
    pub fn new(config: AgentConfig, state_dim: usize, action_dim: usize, goal_rule: SparseGoalReward, seed: u64) -> Result<Self> {
        config.validate()?;
        if goal_rule.layout.state_dim() != state_dim {
            return Err(shape_err!("goal layout spans {} dims, state has {state_dim}", goal_rule.layout.state_dim()));
        }
        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![state_dim];
        dims.extend(&config.hidden);
        dims.push(action_dim);
        let actor = Mlp::new(&dims, OutputSquash::Tanh { bound: 1.0 }, seeder.gen())?;
        dims[0] = state_dim + action_dim;
        *dims.last_mut().unwrap() = 1;
        let critic = Mlp::new(&dims, OutputSquash::Identity, seeder.gen())?;
        Ok(Agent {
            actor_opt: AdamState::new(&actor),
            critic_opt: AdamState::new(&critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            rng: ChaCha8Rng::seed_from_u64(seeder.gen()),
            config,
            state_dim,
            action_dim,
            goal_rule,
            updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn goal_rule(&self) -> &SparseGoalReward {
        &self.goal_rule
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Replaces all four networks; targets are reset to copies of the live nets.
    pub fn set_networks(&mut self, actor: Mlp, critic: Mlp) -> Result<()> {
        if !actor.same_architecture(&self.actor) || !critic.same_architecture(&self.critic) {
            return Err(shape_err!("replacement networks do not match the agent architecture"));
        }
        self.target_actor = actor.clone();
        self.target_critic = critic.clone();
        self.actor = actor;
        self.critic = critic;
        Ok(())
    }

    pub fn config_mut(&mut self) -> &mut AgentConfig {
        &mut self.config
    }

    /// Policy action, with clipped Gaussian noise when `explore` is set.
    pub fn select_action(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        if state.len() != self.state_dim {
            return Err(shape_err!("state width {} but agent expects {}", state.len(), self.state_dim));
        }
        let mut a = self.actor.predict_one(state)?;
        if explore && self.config.exploration_noise_std > 0.0 {
            let noise = Normal::new(0.0, self.config.exploration_noise_std).expect("validated std");
            for v in &mut a {
                *v = (*v + noise.sample(&mut self.rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// Deterministic policy action.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim {
            return Err(shape_err!("state width {} but agent expects {}", state.len(), self.state_dim));
        }
        self.actor.predict_one(state)
    }

    fn check_batch(&self, batch: &TransitionBatch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Precondition("empty batch".into()));
        }
        if batch.states.ncols() != self.state_dim || batch.actions.ncols() != self.action_dim {
            return Err(shape_err!(
                "batch widths ({}, {}) vs agent ({}, {})",
                batch.states.ncols(),
                batch.actions.ncols(),
                self.state_dim,
                self.action_dim
            ));
        }
        Ok(())
    }

    /// Per-item rewards used by the critic: environment rewards, plus the
    /// demonstration-proximity bonus for the shaped-reward baseline.
    pub fn critic_rewards(&self, batch: &TransitionBatch, demos: Demos<'_>) -> Result<Vec<f64>> {
        if self.config.variant != Variant::AcStd {
            return Ok(batch.rewards.clone());
        }
        let expert = demos.expert(self.config.variant)?;
        let (lambda, beta) = (self.config.std_lambda, self.config.std_beta);
        batch
            .states
            .rows()
            .into_iter()
            .zip(batch.next_states.rows())
            .zip(&batch.rewards)
            .map(|((s, s2), r)| {
                let bonus = std_shaped_reward(expert, &s.to_vec(), &s2.to_vec(), lambda, beta)?;
                Ok(r + bonus)
            })
            .collect()
    }

    /// Target-actor actions at the next states and the pseudo-label distance for each
    /// (zero unless the variant regularizes the critic).
    fn next_action_penalty(&self, next_states: ArrayView2<f64>, demos: Demos<'_>) -> Result<(Array2<f64>, Vec<f64>)> {
        let next_actions = self.target_actor.predict(next_states)?;
        let dists = if self.config.variant == Variant::AcSsil {
            let expert = demos.expert(self.config.variant)?;
            let labels = pseudo_actions(expert, &self.target_actor, next_states, self.config.k, self.config.label_weighting)?;
            row_distances(next_actions.view(), labels.view())?
        } else {
            vec![0.0; next_states.nrows()]
        };
        Ok((next_actions, dists))
    }

    /// Bootstrapped critic targets; constants with respect to every parameter.
    pub fn compute_critic_target(&self, batch: &TransitionBatch, demos: Demos<'_>) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let rewards = self.critic_rewards(batch, demos)?;
        let (next_actions, dists) = self.next_action_penalty(batch.next_states.view(), demos)?;
        let next_q = self.target_critic.predict(hstack(batch.next_states.view(), next_actions.view()).view())?;
        let (gamma, alpha) = (self.config.gamma, self.config.alpha);
        Ok(rewards
            .iter()
            .zip(&batch.dones)
            .zip(next_q.column(0))
            .zip(&dists)
            .map(|(((r, &done), q), d)| {
                if done {
                    *r
                } else {
                    r + gamma * (q - alpha * d)
                }
            })
            .collect())
    }

    /// One Adam step on `mean (Q(s, a) - target)^2`. Returns the pre-step loss and mean Q.
    pub fn critic_update_with_targets(&mut self, batch: &TransitionBatch, targets: &[f64]) -> Result<(f64, f64)> {
        self.check_batch(batch)?;
        if targets.len() != batch.len() {
            return Err(shape_err!("{} targets for {} transitions", targets.len(), batch.len()));
        }
        let n = batch.len() as f64;
        let input = hstack(batch.states.view(), batch.actions.view());
        let (q, cache) = self.critic.forward(input.view())?;
        let mut loss = 0.0;
        let mut grad = Array2::zeros((batch.len(), 1));
        for (i, (&qi, &ti)) in q.column(0).iter().zip(targets).enumerate() {
            let err = qi - ti;
            loss += err * err;
            grad[[i, 0]] = 2.0 * err / n;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("critic loss is {loss}")));
        }
        let q_mean = q.column(0).sum() / n;
        let (grads, _) = self.critic.backward(&cache, grad.view())?;
        adam_step(&mut self.critic, &grads, &mut self.critic_opt, self.config.critic_lr)?;
        Ok((loss, q_mean))
    }

    /// Regresses the critic onto [`Agent::compute_critic_target`]. Returns the pre-step loss.
    pub fn critic_update(&mut self, batch: &TransitionBatch, demos: Demos<'_>) -> Result<f64> {
        let targets = self.compute_critic_target(batch, demos)?;
        Ok(self.critic_update_with_targets(batch, &targets)?.0)
    }

    /// One Adam ascent step on `mean_i Q(s_i, pi(s_i))` minus the variant's imitation
    /// term. The critic is held fixed. Returns `(objective, penalty)` before the step.
    pub fn actor_update_detailed(&mut self, batch: &TransitionBatch, demos: Demos<'_>) -> Result<(f64, f64)> {
        self.check_batch(batch)?;
        let variant = self.config.variant;
        let alpha = self.config.alpha;
        let n = batch.len() as f64;
        let states = batch.states.view();

        let (actions, actor_cache) = self.actor.forward(states)?;
        let (q, critic_cache) = self.critic.forward(hstack(states, actions.view()).view())?;
        let q_mean = q.column(0).sum() / n;
        let dq = Array2::from_elem((batch.len(), 1), -1.0 / n);
        let (_, d_input) = self.critic.backward(&critic_cache, dq.view())?;
        let mut d_actions = d_input.slice(s![.., self.state_dim..]).to_owned();

        let mut penalty = 0.0;
        let mut extra: Option<Gradients> = None;
        match variant {
            Variant::ActorSsil | Variant::AcSsil => {
                let expert = demos.expert(variant)?;
                let labels = pseudo_actions(expert, &self.target_actor, states, self.config.k, self.config.label_weighting)?;
                let (p, g) = ssil_actor_penalty(actions.view(), labels.view(), alpha)?;
                penalty = p;
                d_actions += &g;
            }
            Variant::AcBc => {
                let labeled = demos.labeled(variant)?;
                if labeled.state_dim() != self.state_dim || labeled.action_dim() != self.action_dim {
                    return Err(shape_err!("action-labeled demonstrations do not match the agent dims"));
                }
                let (demo_states, demo_actions) = labeled.sample(batch.len(), &mut self.rng);
                let (policy_actions, cache) = self.actor.forward(demo_states.view())?;
                let (p, g) = ssil_actor_penalty(policy_actions.view(), demo_actions.view(), alpha)?;
                penalty = p;
                extra = Some(self.actor.backward(&cache, g.view())?.0);
            }
            Variant::BaseAc | Variant::AcStd => {}
        }

        let (mut grads, _) = self.actor.backward(&actor_cache, d_actions.view())?;
        if let Some(g) = extra {
            add_grads(&mut grads, &g);
        }
        let objective = q_mean - penalty;
        if !objective.is_finite() {
            return Err(Error::Numeric(format!("actor objective is {objective}")));
        }
        adam_step(&mut self.actor, &grads, &mut self.actor_opt, self.config.actor_lr)?;
        Ok((objective, penalty))
    }

    pub fn actor_update(&mut self, batch: &TransitionBatch, demos: Demos<'_>) -> Result<f64> {
        Ok(self.actor_update_detailed(batch, demos)?.0)
    }

    /// Moves both target networks toward the live ones by `tau`.
    pub fn update_targets(&mut self) -> Result<()> {
        soft_update(&mut self.target_actor, &self.actor, self.config.tau)?;
        soft_update(&mut self.target_critic, &self.critic, self.config.tau)
    }

    /// Sample, critic step, actor step, target update.
    pub fn train_step(&mut self, replay: &ReplayBuffer, demos: Demos<'_>) -> Result<StepMetrics> {
        if replay.len() < self.config.batch_size {
            return Err(Error::Precondition(format!(
                "replay holds {} transitions, batch needs {}",
                replay.len(),
                self.config.batch_size
            )));
        }
        let items = replay.sample(self.config.batch_size, self.config.her_ratio, &self.goal_rule, &mut self.rng)?;
        let batch = TransitionBatch::from_transitions(&items)?;
        let targets = self.compute_critic_target(&batch, demos)?;
        let (critic_loss, q_mean) = self.critic_update_with_targets(&batch, &targets)?;
        let (actor_objective, actor_penalty) = self.actor_update_detailed(&batch, demos)?;
        self.update_targets()?;
        self.updates += 1;
        Ok(StepMetrics {
            critic_loss,
            actor_objective,
            q_mean,
            target_mean: targets.iter().sum::<f64>() / targets.len() as f64,
            actor_penalty,
        })
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::{GoalLayout, Transition};
    use crate::ssil::LabelWeighting;

    const SD: usize = 6;
    const AD: usize = 2;

    fn rule() -> SparseGoalReward {
        SparseGoalReward { layout: GoalLayout { obs_dim: 2, goal_dim: 2 }, success_threshold: 0.05 }
    }

    fn config(variant: Variant) -> AgentConfig {
        AgentConfig { variant, hidden: vec![8, 8], batch_size: 16, ..Default::default() }
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn expert(seed: u64) -> ExpertBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = (0..4).map(|id| (id, (0..6).map(|_| rand_vec(&mut rng, SD)).collect())).collect();
        ExpertBuffer::from_episodes(SD, eps, None).unwrap()
    }

    fn replay(seed: u64) -> ReplayBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = ReplayBuffer::new(1000, SD, AD).unwrap();
        for ep in 0..5 {
            for t in 0..10 {
                buf.push(Transition {
                    state: rand_vec(&mut rng, SD),
                    action: rand_vec(&mut rng, AD),
                    reward: -1.0,
                    next_state: rand_vec(&mut rng, SD),
                    done: false,
                    episode_id: ep,
                    step_index: t,
                })
                .unwrap();
            }
        }
        buf
    }

    fn batch(seed: u64, n: usize, done: bool) -> TransitionBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<_> = (0..n)
            .map(|i| Transition {
                state: rand_vec(&mut rng, SD),
                action: rand_vec(&mut rng, AD),
                reward: rng.gen_range(-1.0..0.0),
                next_state: rand_vec(&mut rng, SD),
                done,
                episode_id: 0,
                step_index: i as u32,
            })
            .collect();
        TransitionBatch::from_transitions(&items).unwrap()
    }

    fn agent(variant: Variant, seed: u64) -> Agent {
        Agent::new(config(variant), SD, AD, rule(), seed).unwrap()
    }

    #[test]
    fn targets_start_equal_to_live_nets() {
        let a = agent(Variant::AcSsil, 1);
        assert_eq!(a.actor(), a.target_actor());
        assert_eq!(a.critic(), a.target_critic());
    }

    #[test]
    fn gamma_zero_and_done_collapse_to_reward() {
        let ex = expert(2);
        let demos = Demos { expert: Some(&ex), labeled: None };
        for variant in [Variant::BaseAc, Variant::AcSsil, Variant::ActorSsil] {
            let mut a = agent(variant, 3);
            let b = batch(4, 10, true);
            assert_eq!(a.compute_critic_target(&b, demos).unwrap(), b.rewards);
            a.config_mut().gamma = 0.0;
            let b = batch(5, 10, false);
            assert_eq!(a.compute_critic_target(&b, demos).unwrap(), b.rewards);
        }
    }

    #[test]
    fn std_terminal_target_is_shaped_reward() {
        let ex = expert(2);
        let demos = Demos { expert: Some(&ex), labeled: None };
        let a = agent(Variant::AcStd, 3);
        let b = batch(4, 6, true);
        let t = a.compute_critic_target(&b, demos).unwrap();
        for (i, ti) in t.iter().enumerate() {
            let bonus = std_shaped_reward(&ex, &b.states.row(i).to_vec(), &b.next_states.row(i).to_vec(), 1.0, 1.0).unwrap();
            assert_eq!(*ti, b.rewards[i] + bonus);
        }
    }

    #[test]
    fn ssil_target_never_exceeds_base_target() {
        let ex = expert(7);
        let demos = Demos { expert: Some(&ex), labeled: None };
        let ssil = agent(Variant::AcSsil, 8);
        let mut base = ssil.clone();
        base.config_mut().variant = Variant::BaseAc;
        let b = batch(9, 32, false);
        let ts = ssil.compute_critic_target(&b, demos).unwrap();
        let tb = base.compute_critic_target(&b, demos).unwrap();
        for (s, b) in ts.iter().zip(&tb) {
            assert!(s < b);
        }
    }

    #[test]
    fn ssil_target_matches_base_when_label_equals_action() {
        // A constant target actor labels every state with its own output.
        let ex = expert(7);
        let demos = Demos { expert: Some(&ex), labeled: None };
        let mut ssil = agent(Variant::AcSsil, 8);
        let zero = Mlp::zeros(&[SD, 8, 8, AD], OutputSquash::Tanh { bound: 1.0 }).unwrap();
        let mut biases = zero.biases().to_vec();
        biases[2].fill(0.3);
        let actor = Mlp::from_parts(zero.weights().to_vec(), biases, zero.squash()).unwrap();
        let critic = ssil.critic().clone();
        ssil.set_networks(actor, critic).unwrap();
        let mut base = ssil.clone();
        base.config_mut().variant = Variant::BaseAc;
        let b = batch(9, 32, false);
        assert_eq!(ssil.compute_critic_target(&b, demos).unwrap(), base.compute_critic_target(&b, demos).unwrap());
    }

    #[test]
    fn missing_demos_is_config_error() {
        let b = batch(1, 4, false);
        let mut a = agent(Variant::AcSsil, 1);
        assert!(matches!(a.compute_critic_target(&b, Demos::none()), Err(Error::Config(_))));
        let mut bc = agent(Variant::AcBc, 1);
        assert!(matches!(bc.actor_update(&b, Demos::none()), Err(Error::Config(_))));
        assert!(matches!(a.actor_update(&b, Demos::none()), Err(Error::Config(_))));
    }

    #[test]
    fn critic_loss_zero_leaves_params_unchanged() {
        let mut a = agent(Variant::BaseAc, 11);
        let b = batch(12, 8, false);
        let q = a.critic().predict(hstack(b.states.view(), b.actions.view()).view()).unwrap();
        let before = a.critic().clone();
        let (loss, _) = a.critic_update_with_targets(&b, &q.column(0).to_vec()).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(a.critic(), &before);
    }

    #[test]
    fn critic_step_reduces_loss_on_single_transition() {
        let mut a = agent(Variant::BaseAc, 13);
        a.config_mut().critic_lr = 1e-3;
        let b = batch(14, 1, false);
        let targets = [0.7];
        let (l0, _) = a.critic_update_with_targets(&b, &targets).unwrap();
        let (l1, _) = a.critic_update_with_targets(&b, &targets).unwrap();
        assert!(l1 < l0);
    }

    #[test]
    fn duplicated_batch_gives_same_updates() {
        let b = batch(15, 6, false);
        let mut items = Vec::new();
        for _ in 0..2 {
            for i in 0..b.len() {
                items.push(Transition {
                    state: b.states.row(i).to_vec(),
                    action: b.actions.row(i).to_vec(),
                    reward: b.rewards[i],
                    next_state: b.next_states.row(i).to_vec(),
                    done: b.dones[i],
                    episode_id: 0,
                    step_index: i as u32,
                });
            }
        }
        let doubled = TransitionBatch::from_transitions(&items).unwrap();
        let mut a1 = agent(Variant::BaseAc, 16);
        let mut a2 = a1.clone();
        a1.critic_update(&b, Demos::none()).unwrap();
        a2.critic_update(&doubled, Demos::none()).unwrap();
        a1.actor_update(&b, Demos::none()).unwrap();
        a2.actor_update(&doubled, Demos::none()).unwrap();
        for (x, y) in a1.critic().tensors().zip(a2.critic().tensors()).chain(a1.actor().tensors().zip(a2.actor().tensors())) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-12, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn analytic_critic_pulls_actions_to_zero() {
        // Q(s, a) = -|a|_1 = -sum(relu(a_j) + relu(-a_j)), passed through an identity second layer.
        let mut w0 = Array2::zeros((8, SD + AD));
        for j in 0..AD {
            w0[[2 * j, SD + j]] = 1.0;
            w0[[2 * j + 1, SD + j]] = -1.0;
        }
        let w1 = Array2::eye(8);
        let w2 = Array2::from_elem((1, 8), -1.0);
        let critic = Mlp::from_parts(vec![w0, w1, w2], vec![ndarray::Array1::zeros(8), ndarray::Array1::zeros(8), ndarray::Array1::zeros(1)], OutputSquash::Identity).unwrap();
        let mut a = agent(Variant::BaseAc, 17);
        let actor = a.actor().clone();
        a.set_networks(actor, critic).unwrap();
        let b = batch(18, 32, false);
        let l1 = |a: &Agent| a.actor().predict(b.states.view()).unwrap().iter().map(|v| v.abs()).sum::<f64>();
        let before = l1(&a);
        for _ in 0..20 {
            a.actor_update(&b, Demos::none()).unwrap();
        }
        assert!(l1(&a) < 0.9 * before);
    }

    #[test]
    fn zero_critic_ssil_moves_toward_labels() {
        let ex = expert(19);
        let demos = Demos { expert: Some(&ex), labeled: None };
        let mut a = agent(Variant::ActorSsil, 20);
        // Targets lag so labels differ from the live actor.
        let target = Mlp::new(&[SD, 8, 8, AD], OutputSquash::Tanh { bound: 1.0 }, 99).unwrap();
        let zero_critic = Mlp::zeros(&[SD + AD, 8, 8, 1], OutputSquash::Identity).unwrap();
        let actor = a.actor().clone();
        a.set_networks(actor, zero_critic).unwrap();
        a.target_actor = target;
        let b = batch(21, 16, false);
        let labels = pseudo_actions(&ex, a.target_actor(), b.states.view(), 5, LabelWeighting::Uniform).unwrap();
        let dist = |a: &Agent| {
            let acts = a.actor().predict(b.states.view()).unwrap();
            row_distances(acts.view(), labels.view()).unwrap().iter().sum::<f64>()
        };
        let d0 = dist(&a);
        a.actor_update(&b, demos).unwrap();
        assert!(dist(&a) < d0);
    }

    #[test]
    fn alpha_zero_recovers_base() {
        let ex = expert(22);
        let rb = replay(23);
        let demos = Demos { expert: Some(&ex), labeled: None };
        let mut ssil = agent(Variant::AcSsil, 24);
        ssil.config_mut().alpha = 0.0;
        let mut base = agent(Variant::BaseAc, 24);
        base.config_mut().alpha = 0.0;
        for _ in 0..20 {
            assert_eq!(ssil.train_step(&rb, demos).unwrap(), base.train_step(&rb, demos).unwrap());
        }
        assert_eq!(ssil.actor(), base.actor());
    }

    #[test]
    fn training_is_deterministic() {
        let ex = expert(25);
        let rb = replay(26);
        let demos = Demos { expert: Some(&ex), labeled: None };
        let mut a = agent(Variant::AcSsil, 27);
        let mut b = agent(Variant::AcSsil, 27);
        for _ in 0..10 {
            assert_eq!(a.train_step(&rb, demos).unwrap(), b.train_step(&rb, demos).unwrap());
        }
    }

    #[test]
    fn tau_zero_freezes_targets() {
        let rb = replay(28);
        let mut a = agent(Variant::BaseAc, 29);
        a.config_mut().tau = 0.0;
        let (ta, tc) = (a.target_actor().clone(), a.target_critic().clone());
        a.train_step(&rb, Demos::none()).unwrap();
        assert_eq!(a.target_actor(), &ta);
        assert_eq!(a.target_critic(), &tc);
        assert_ne!(a.actor(), &ta);
    }

    #[test]
    fn train_step_needs_full_batch() {
        let rb = replay(30);
        let mut a = agent(Variant::BaseAc, 31);
        a.config_mut().batch_size = rb.len() + 1;
        assert!(matches!(a.train_step(&rb, Demos::none()), Err(Error::Precondition(_))));
    }

    #[test]
    fn greedy_action_is_deterministic_and_zero_actor_gives_zero() {
        let mut a = agent(Variant::BaseAc, 32);
        let s = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(a.select_action(&s, false).unwrap(), a.select_action(&s, false).unwrap());
        let zero = Mlp::zeros(&[SD, 8, 8, AD], OutputSquash::Tanh { bound: 1.0 }).unwrap();
        let critic = a.critic().clone();
        a.set_networks(zero, critic).unwrap();
        assert_eq!(a.select_action(&s, false).unwrap(), vec![0.0; AD]);
        assert!(a.select_action(&s[..3], false).is_err());
    }

    #[test]
    fn exploration_noise_is_zero_mean() {
        let mut a = agent(Variant::BaseAc, 33);
        let s = [0.1, -0.2, 0.3, 0.0, 0.5, -0.6];
        let greedy = a.act(&s).unwrap();
        let n = 10_000;
        let mut mean = [0.0; AD];
        for _ in 0..n {
            for (m, v) in mean.iter_mut().zip(a.select_action(&s, true).unwrap()) {
                *m += v / n as f64;
            }
        }
        let sigma = a.config().exploration_noise_std;
        for (m, g) in mean.iter().zip(&greedy) {
            assert!((m - g).abs() <= 3.0 * sigma / 100.0, "{m} vs {g}");
        }
    }

    #[test]
    fn std_reward_matches_brute_force() {
        let ex = expert(34);
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let (s, s2) = (rand_vec(&mut rng, SD), rand_vec(&mut rng, SD));
        let brute = (0..ex.len())
            .map(|r| {
                let (e, e2) = ex.pair(r);
                e.iter().chain(e2).zip(s.iter().chain(&s2)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        let got = std_shaped_reward(&ex, &s, &s2, 2.0, 0.5).unwrap();
        assert!((got - 2.0 * (-0.5 * brute).exp()).abs() < 1e-12);
        let (e, e2) = ex.pair(3);
        assert_eq!(std_shaped_reward(&ex, e, e2, 1.5, 1.0).unwrap(), 1.5);
    }

    #[test]
    fn checkpoint_resume_continues_stream() {
        let ex = expert(36);
        let rb = replay(37);
        let demos = Demos { expert: Some(&ex), labeled: None };
        let mut a = agent(Variant::AcSsil, 38);
        for _ in 0..5 {
            a.train_step(&rb, demos).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        a.save(&path).unwrap();
        let mut b = Agent::load(&path).unwrap();
        for _ in 0..5 {
            assert_eq!(a.train_step(&rb, demos).unwrap(), b.train_step(&rb, demos).unwrap());
        }
        assert_eq!(a.actor(), b.actor());
    }
}
