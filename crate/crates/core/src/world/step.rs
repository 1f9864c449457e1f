use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{wrap, Action, AgentId, AgentState, Scenario, Species, World, WorldError};

/// One predation event. Env1/Env2 kills have exactly one predator; Env3
/// kills list every predator whose attack contributed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kill {
    pub predators: Vec<AgentId>,
    pub prey: AgentId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub kills: Vec<Kill>,
    /// Reward of every agent that acted this tick (0 when nothing happened),
    /// plus reproduction rewards added by the birth pass.
    pub rewards: BTreeMap<AgentId, f64>,
    pub born: Vec<AgentState>,
    pub died: Vec<AgentId>,
}

impl StepOutcome {
    pub fn add_reward(&mut self, id: AgentId, r: f64) {
        *self.rewards.entry(id).or_insert(0.0) += r;
    }

    pub fn reward(&self, id: AgentId) -> f64 {
        self.rewards.get(&id).copied().unwrap_or(0.0)
    }

    pub fn born_of(&self, species: Species) -> usize {
        self.born.iter().filter(|a| a.species == species).count()
    }
}

impl World {
    /// Number of unit moves an agent makes per action.
    pub fn stride(&self, agent: &AgentState) -> u32 {
        if self.scenario == Scenario::Env3 {
            let k = crate::math::round(agent.traits.speed).max(1.0) as u32;
            k.clamp(1, self.config.speed_cap)
        } else {
            1
        }
    }

    /// Advances the world by one tick: simultaneous movement, predation,
    /// health bookkeeping and removal of the dead. `actions` must list every
    /// living agent exactly once, in ascending id order.
    ///
    /// No randomness is consumed, so the outcome is a function of the state
    /// and the actions alone.
    pub fn step(&mut self, actions: &[(AgentId, Action)]) -> Result<StepOutcome, WorldError> {
        if actions.len() != self.agents.len()
            || actions.iter().zip(&self.agents).any(|((id, _), a)| *id != a.id)
        {
            if let Some((id, _)) = actions.iter().find(|(id, _)| self.slot_of(*id).is_none()) {
                return Err(WorldError::UnknownAgent(*id));
            }
            return Err(WorldError::ActionsMismatch);
        }
        let dims = self.dims();
        let width = self.config.width;

        for slot in 0..self.agents.len() {
            let stride = self.stride(&self.agents[slot]);
            let delta = actions[slot].1.delta();
            let mut pos = self.agents[slot].pos;
            for _ in 0..stride {
                let next = wrap(pos, delta, dims);
                if self.walls[next.cell(width)] {
                    break;
                }
                pos = next;
            }
            self.agents[slot].pos = pos;
        }
        self.reindex();

        let mut outcome = StepOutcome::default();
        for a in &self.agents {
            outcome.rewards.insert(a.id, 0.0);
        }

        // Each predator targets its nearest prey; targets keyed by prey slot
        // so that resolution runs in ascending prey id.
        let reach = (self.config.predation_scope - 1) / 2;
        let mut targets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (slot, a) in self.agents.iter().enumerate() {
            if a.species != Species::Predator {
                continue;
            }
            if let Some((prey, _)) = self.nearest(a.pos, Species::Prey, reach, None) {
                targets.entry(prey).or_default().push(slot);
            }
        }

        let mut fed = alloc::vec![0.0; self.agents.len()];
        let mut dead = alloc::vec![false; self.agents.len()];
        for (prey, attackers) in targets {
            let prey_id = self.agents[prey].id;
            match self.scenario {
                Scenario::Env1 | Scenario::Env2 => {
                    let killer = attackers[0];
                    dead[prey] = true;
                    fed[killer] = 1.0;
                    outcome.add_reward(self.agents[killer].id, 1.0);
                    outcome.add_reward(prey_id, -1.0);
                    outcome.kills.push(Kill { predators: alloc::vec![self.agents[killer].id], prey: prey_id });
                }
                Scenario::Env3 => {
                    let hit: f64 = attackers.iter().map(|&p| self.agents[p].traits.attack).sum();
                    if !self.config.damage_persists {
                        self.agents[prey].damage = 0.0;
                    }
                    self.agents[prey].damage += hit;
                    if self.agents[prey].resilience_left() <= 0.0 {
                        dead[prey] = true;
                        let share = 1.0 / attackers.len() as f64;
                        for &p in &attackers {
                            fed[p] += if self.config.share_gain { share } else { 1.0 };
                            outcome.add_reward(self.agents[p].id, share);
                        }
                        outcome.add_reward(prey_id, -1.0);
                        outcome.kills.push(Kill {
                            predators: attackers.iter().map(|&p| self.agents[p].id).collect(),
                            prey: prey_id,
                        });
                    }
                }
            }
        }

        let (cost, gain, cap) = (self.config.move_cost, self.config.capture_gain, self.config.health_cap);
        for (slot, a) in self.agents.iter_mut().enumerate() {
            if a.species == Species::Predator {
                let bonus = gain * fed[slot];
                a.health = (a.health - cost + bonus).clamp(0.0, cap);
                if a.health <= 0.0 {
                    dead[slot] = true;
                }
            }
        }

        outcome.died = self.agents.iter().zip(&dead).filter(|(_, &d)| d).map(|(a, _)| a.id).collect();
        if !outcome.died.is_empty() {
            let mut i = 0;
            self.agents.retain(|_| {
                let keep = !dead[i];
                i += 1;
                keep
            });
        }
        self.tick += 1;
        self.reindex();
        Ok(outcome)
    }
}
