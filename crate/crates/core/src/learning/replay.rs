use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::policy::{decide_actions, Brains, Exploration, PolicyError, PolicyKind, RecurrentState};
use crate::rng::SimRng;
use crate::world::{Action, AgentId, Species, World};

/// One recorded step of one agent inside a virtual window.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub agent_id: AgentId,
    pub species: Species,
    pub obs: Vec<f64>,
    pub recurrent_state_in: RecurrentState,
    pub action: Action,
    pub reward: f64,
    /// The agent died on this step; no bootstrapping from the next state.
    pub done: bool,
    /// Recorded after the agent's death; carries no learning signal.
    pub inert: bool,
}

/// Consecutive transitions of one agent, starting from a zero recurrent state.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentWindow {
    pub agent_id: AgentId,
    pub species: Species,
    pub identity: Vec<f64>,
    pub steps: Vec<Transition>,
    /// Observation after the last step, when the agent survived the window.
    pub final_obs: Option<Vec<f64>>,
}

impl AgentWindow {
    /// Transitions that carry a learning signal.
    pub fn active(&self) -> usize {
        self.steps.iter().filter(|t| !t.inert).count()
    }

    /// Observation following step `t`, if any.
    pub fn obs_next(&self, t: usize) -> Option<&[f64]> {
        match self.steps.get(t + 1) {
            Some(n) if !n.inert => Some(&n.obs),
            Some(_) => None,
            None => self.final_obs.as_deref(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayBuffer {
    pub windows: Vec<AgentWindow>,
}

impl ReplayBuffer {
    /// Total number of transitions, inert ones included.
    pub fn len(&self) -> usize {
        self.windows.iter().map(|w| w.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn active(&self, species: Species) -> usize {
        self.windows.iter().filter(|w| w.species == species).map(|w| w.active()).sum()
    }

    pub fn clear(&mut self) {
        self.windows.clear();
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.windows.iter().flat_map(|w| w.steps.iter())
    }
}

/// Plays `steps` ticks on a clone of `real` and records one transition per
/// continual learner and step.
///
/// Every recurrent state in the clone starts at zero. Agents dying in the
/// clone record their death reward with `done` once and then inert
/// zero-reward transitions for the rest of the window; they are taken off
/// the clone's grid so they no longer interact. The clone runs movement,
/// predation and health only, never births, and consumes randomness from
/// `rng` alone, so `real` is untouched.
pub fn rollout_window(
    real: &World,
    brains: &Brains<'_>,
    steps: usize,
    explore: Exploration,
    rng: &mut SimRng,
) -> Result<ReplayBuffer, PolicyError> {
    let mut clone = real.clone();
    for a in clone.agents_mut() {
        a.memory = RecurrentState::default();
    }
    let mut windows: BTreeMap<AgentId, AgentWindow> = clone
        .agents()
        .iter()
        .filter(|a| a.policy == PolicyKind::Learned { frozen: false })
        .map(|a| {
            (a.id, AgentWindow { agent_id: a.id, species: a.species, identity: a.identity.clone(), steps: Vec::new(), final_obs: None })
        })
        .collect();
    let mut dead: BTreeMap<AgentId, (Vec<f64>, RecurrentState)> = BTreeMap::new();

    for _ in 0..steps {
        let states_in: BTreeMap<AgentId, RecurrentState> = clone
            .agents()
            .iter()
            .filter(|a| windows.contains_key(&a.id))
            .map(|a| (a.id, a.memory.clone()))
            .collect();
        let decisions = decide_actions(&mut clone, brains, explore, rng)?;
        let actions: Vec<(AgentId, Action)> = decisions.iter().map(|d| (d.id, d.action)).collect();
        let outcome = clone.step(&actions).expect("actions cover the clone's living agents");
        for (id, (obs, state)) in &dead {
            let w = windows.get_mut(id).expect("window of a dead learner");
            w.steps.push(Transition {
                agent_id: *id,
                species: w.species,
                obs: obs.clone(),
                recurrent_state_in: state.clone(),
                action: Action::Right,
                reward: 0.0,
                done: true,
                inert: true,
            });
        }
        for d in decisions {
            let Some(w) = windows.get_mut(&d.id) else { continue };
            let obs = d.obs.expect("learned agents report observations");
            let died = outcome.died.binary_search(&d.id).is_ok();
            let state_in = states_in.get(&d.id).cloned().unwrap_or_default();
            if died {
                dead.insert(d.id, (obs.clone(), state_in.clone()));
            }
            w.steps.push(Transition {
                agent_id: d.id,
                species: w.species,
                obs,
                recurrent_state_in: state_in,
                action: d.action,
                reward: outcome.reward(d.id),
                done: died,
                inert: false,
            });
        }
    }
    let side = clone.config().obs_side();
    let len = side * side * clone.config().channels as usize;
    for (slot, a) in clone.agents().iter().enumerate() {
        if let Some(w) = windows.get_mut(&a.id) {
            let mut obs = alloc::vec![0.0; len];
            clone.observe_slot_into(slot, &mut obs);
            w.final_obs = Some(obs);
        }
    }
    Ok(ReplayBuffer { windows: windows.into_values().collect() })
}
