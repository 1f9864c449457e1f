//! Virtual-window training: clone the world, roll out a window of steps to
//! fill a replay buffer, fit the online network to double-Q targets with
//! backpropagation through time, then commit one real tick.

mod optim;
mod replay;
mod trainer;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use optim::RmsProp;
pub use replay::{rollout_window, AgentWindow, ReplayBuffer, Transition};
pub use trainer::{
    commit_real_step, train_step, BatchReport, SpeciesLearner, TickReport, TrainReport, Trainer, TrainerCheckpoint,
    TRAINER_SCHEMA,
};

use crate::policy::argmax;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    /// Steps per virtual window.
    pub window: usize,
    /// Transitions per minibatch.
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Real ticks over which epsilon falls linearly to `epsilon_end`.
    pub anneal_steps: u64,
    /// Optimiser updates between target-network refreshes.
    pub target_net_period: u64,
    /// Real ticks between virtual windows.
    pub train_every: u64,
    /// Bootstrap from `max_a Q_online(s', a)` instead of the double-Q target.
    pub vanilla_max_target: bool,
    /// Exploration used by frozen networks.
    pub frozen_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            learning_rate: 1e-4,
            rms_decay: 0.99,
            rms_eps: 1e-8,
            window: 8,
            batch_size: 32,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            anneal_steps: 50_000,
            target_net_period: 500,
            train_every: 1,
            vanilla_max_target: false,
            frozen_epsilon: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err("gamma must lie in [0, 1)");
        }
        if self.window == 0 || self.batch_size == 0 || self.target_net_period == 0 || self.train_every == 0 {
            return Err("window, batch_size, target_net_period and train_every must be positive");
        }
        let eps = [self.epsilon_start, self.epsilon_end, self.frozen_epsilon];
        if eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err("exploration rates must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_eps > 0.0) {
            return Err("optimiser settings out of range");
        }
        Ok(())
    }

    /// Linear schedule, equal to `epsilon_end` from `anneal_steps` on.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        if step >= self.anneal_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        let e = self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac;
        e.clamp(self.epsilon_end.min(self.epsilon_start), self.epsilon_start.max(self.epsilon_end))
    }
}

/// `r` for terminal transitions; otherwise `r + gamma * Q_target(s', a*)`
/// with `a* = argmax_a Q_online(s', a)`, or `r + gamma * max_a Q_online(s', a)`
/// when `vanilla` is set.
pub fn double_q_target(
    reward: f64,
    done: bool,
    q_online_next: &[f64],
    q_target_next: &[f64],
    gamma: f64,
    vanilla: bool,
) -> f64 {
    if done {
        return reward;
    }
    let best = argmax(q_online_next);
    let bootstrap = if vanilla { q_online_next[best] } else { q_target_next[best] };
    reward + gamma * bootstrap
}

/// One entry of a target batch: reward, terminal flag and next state.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetQuery<S> {
    pub reward: f64,
    pub done: bool,
    pub next: S,
}

/// Targets for a batch given any pair of Q-functions over states `S`.
pub fn compute_targets<S, F, G>(batch: &[TargetQuery<S>], online: F, target: G, gamma: f64, vanilla: bool) -> Vec<f64>
where
    F: Fn(&S) -> Vec<f64>,
    G: Fn(&S) -> Vec<f64>,
{
    batch
        .iter()
        .map(|b| {
            if b.done {
                b.reward
            } else {
                double_q_target(b.reward, false, &online(&b.next), &target(&b.next), gamma, vanilla)
            }
        })
        .collect()
}
