//! Action selection: random, scripted chase/flee, and the learned recurrent
//! Q-network with epsilon-greedy exploration.

mod network;

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use network::{
    Gradients, LayerRecord, NetworkCheckpoint, NetworkConfig, QNetworkParams, RecurrentState, SequenceCache, TdTarget,
    N_ACTIONS,
    NETWORK_SCHEMA,
};

use crate::rng::SimRng;
use crate::world::{chebyshev, wrap, Action, AgentId, Species, World};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("non-finite loss or gradient")]
    NonFinite,
    #[error("bad network checkpoint: {0}")]
    Checkpoint(&'static str),
    #[error("no network available for learned {0} agents")]
    MissingNetwork(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    /// Step toward the nearest visible agent of the other species.
    ScriptedChase,
    /// Step away from the nearest visible agent of the other species.
    ScriptedFlee,
    /// Shared per-species network; `frozen` agents use a fixed snapshot and
    /// never contribute training data.
    Learned { frozen: bool },
}

impl PolicyKind {
    /// The scripted behaviour appropriate for a species.
    pub fn scripted_for(species: Species) -> PolicyKind {
        match species {
            Species::Predator => PolicyKind::ScriptedChase,
            Species::Prey => PolicyKind::ScriptedFlee,
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, PolicyKind::Learned { .. })
    }

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::ScriptedChase => "chase",
            PolicyKind::ScriptedFlee => "flee",
            PolicyKind::Learned { frozen: true } => "frozen",
            PolicyKind::Learned { frozen: false } => "continual",
        }
    }
}

/// Fractions of policy kinds within a species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMix {
    pub entries: Vec<(PolicyKind, f64)>,
}

impl PolicyMix {
    pub fn single(kind: PolicyKind) -> Self {
        PolicyMix { entries: alloc::vec![(kind, 1.0)] }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let sum: f64 = self.entries.iter().map(|e| e.1).sum();
        if self.entries.is_empty() || self.entries.iter().any(|e| !(e.1 >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err("policy fractions must be non-negative and sum to 1");
        }
        Ok(())
    }

    /// Deterministic largest-remainder split of `n` agents, in entry order.
    pub fn allocate(&self, n: usize) -> Vec<PolicyKind> {
        let quotas: Vec<f64> = self.entries.iter().map(|e| e.1 * n as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
        let mut left = n.saturating_sub(counts.iter().sum());
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - counts[a] as f64;
            let rb = quotas[b] - counts[b] as f64;
            rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for &k in order.iter().cycle().take(left.min(order.len() * 2)) {
            if left == 0 {
                break;
            }
            counts[k] += 1;
            left -= 1;
        }
        self.entries.iter().zip(counts).flat_map(|(e, c)| core::iter::repeat_n(e.0, c)).collect()
    }

    /// One kind drawn with the mix's probabilities; no draw for a single kind.
    pub fn draw(&self, rng: &mut SimRng) -> PolicyKind {
        if self.entries.len() == 1 {
            return self.entries[0].0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(k, f) in &self.entries {
            acc += f;
            if u < acc {
                return k;
            }
        }
        self.entries.last().map(|e| e.0).unwrap_or(PolicyKind::Random)
    }
}

/// Uniform with probability `epsilon`, otherwise the arg-max with ties to
/// the lowest index. Always consumes exactly two draws.
pub fn act_epsilon_greedy(q: &[f64; N_ACTIONS], epsilon: f64, rng: &mut SimRng) -> Action {
    let u: f64 = rng.random();
    let pick = rng.random_range(0..N_ACTIONS);
    if u < epsilon {
        Action::from_index(pick)
    } else {
        Action::from_index(argmax(q))
    }
}

pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = k;
        }
    }
    best
}

pub fn random_action(rng: &mut SimRng) -> Action {
    Action::from_index(rng.random_range(0..N_ACTIONS))
}

/// Chases (predators) or flees (preys) the nearest visible agent of the
/// other species; `chase` overrides which of the two is done. Without a
/// visible target the move is uniform.
///
/// Moves are scored by the resulting Chebyshev distance, then Manhattan
/// distance; remaining ties prefer the axis with the larger gap, then the
/// lower action index. Moves into walls are skipped.
pub fn scripted_policy(world: &World, slot: usize, chase: bool, rng: &mut SimRng) -> Action {
    let me = &world.agents()[slot];
    let other = match me.species {
        Species::Predator => Species::Prey,
        Species::Prey => Species::Predator,
    };
    let Some((_, (dx, dy))) = world.nearest(me.pos, other, world.config().obs_radius, None) else {
        return random_action(rng);
    };
    let x_major = dx.unsigned_abs() >= dy.unsigned_abs();
    let dims = world.dims();
    let mut best: Option<(i64, Action)> = None;
    for a in Action::ALL {
        let (mx, my) = a.delta();
        if world.is_wall(wrap(me.pos, (mx, my), dims)) {
            continue;
        }
        let off = (dx - mx, dy - my);
        let cheb = chebyshev(off) as i64;
        let manh = (off.0.abs() + off.1.abs()) as i64;
        let on_major = (mx != 0) == x_major;
        let dist = cheb * 1000 + manh;
        let score = if chase { -dist } else { dist } * 4 + if on_major { 2 } else { 0 };
        let better = match best {
            None => true,
            Some((s, _)) => score > s,
        };
        if better {
            best = Some((score, a));
        }
    }
    best.map_or(Action::Right, |b| b.1)
}

/// Networks used to act: the live (trainable) parameters and an optional
/// frozen snapshot for each species, indexed by [`Species::index`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Brains<'a> {
    pub live: [Option<&'a QNetworkParams>; 2],
    pub frozen: [Option<&'a QNetworkParams>; 2],
}

impl<'a> Brains<'a> {
    pub fn params_for(&self, species: Species, kind: PolicyKind) -> Option<&'a QNetworkParams> {
        match kind {
            PolicyKind::Learned { frozen: true } => self.frozen[species.index()].or(self.live[species.index()]),
            PolicyKind::Learned { frozen: false } => self.live[species.index()],
            _ => None,
        }
    }
}

/// Exploration rates for continual learners and for frozen networks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exploration {
    pub continual: f64,
    pub frozen: f64,
}

/// What an agent did this tick; learned agents also report their input.
#[derive(Clone, Debug)]
pub struct Decision {
    pub id: AgentId,
    pub action: Action,
    pub obs: Option<Vec<f64>>,
}

/// Chooses an action for every living agent, in ascending id order, and
/// advances learned agents' recurrent memories.
///
/// Observations and network passes are pure and may be evaluated in
/// parallel; random draws happen afterwards in id order so the result is
/// identical to a sequential evaluation.
pub fn decide_actions(
    world: &mut World,
    brains: &Brains<'_>,
    explore: Exploration,
    rng: &mut SimRng,
) -> Result<Vec<Decision>, PolicyError> {
    let n = world.agents().len();
    let obs_len = world.config().obs_side().pow(2) * world.config().channels as usize;
    let evaluate = |slot: usize| -> Result<Option<(Vec<f64>, [f64; N_ACTIONS], RecurrentState)>, PolicyError> {
        let a = &world.agents()[slot];
        if !a.policy.is_learned() {
            return Ok(None);
        }
        let params = brains
            .params_for(a.species, a.policy)
            .ok_or(PolicyError::MissingNetwork(a.species.name()))?;
        let mut obs = alloc::vec![0.0; obs_len];
        world.observe_slot_into(slot, &mut obs);
        let (q, next) = params.forward(&obs, &a.memory, &a.identity)?;
        Ok(Some((obs, q, next)))
    };
    #[cfg(feature = "parallel")]
    let evaluated: Vec<_> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(evaluate).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let evaluated: Vec<_> = (0..n).map(evaluate).collect::<Result<_, _>>()?;

    let mut out = Vec::with_capacity(n);
    for (slot, ev) in evaluated.into_iter().enumerate() {
        let kind = world.agents()[slot].policy;
        let id = world.agents()[slot].id;
        let decision = match (kind, ev) {
            (PolicyKind::Learned { frozen }, Some((obs, q, next))) => {
                let eps = if frozen { explore.frozen } else { explore.continual };
                let action = act_epsilon_greedy(&q, eps, rng);
                world.agents_mut()[slot].memory = next;
                Decision { id, action, obs: Some(obs) }
            }
            (PolicyKind::ScriptedChase, _) => Decision { id, action: scripted_policy(world, slot, true, rng), obs: None },
            (PolicyKind::ScriptedFlee, _) => Decision { id, action: scripted_policy(world, slot, false, rng), obs: None },
            _ => Decision { id, action: random_action(rng), obs: None },
        };
        out.push(decision);
    }
    Ok(out)
}
