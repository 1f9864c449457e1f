//! Toroidal grid world: agents, walls, tick mechanics and observations.

mod config;
mod observation;
mod spatial;
mod step;

use alloc::vec::Vec;
use core::fmt;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use config::WorldConfig;
pub use observation::{Observation, EMPTY_RGB, PREDATOR_RGB, PREY_RGB, WALL_RGB};
pub use step::{Kill, StepOutcome};

use crate::policy::{PolicyKind, PolicyMix, RecurrentState};
use crate::reproduction::{Genome, ReproConfig};
use crate::rng::{self, SimRng, Stream};
use spatial::SpatialIndex;

/// Health reported for preys, which never starve.
pub const PREY_HEALTH: f64 = 1.0;

pub const CHECKPOINT_SCHEMA: &str = "predprey.world/1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("invalid world configuration: {0}")]
    Config(&'static str),
    #[error("{requested} agents requested but only {available} free cells")]
    Overcrowded { requested: usize, available: usize },
    #[error("unknown or dead agent {0}")]
    UnknownAgent(AgentId),
    #[error("action list does not match the living agents")]
    ActionsMismatch,
    #[error("checkpoint schema `{0}` is not supported")]
    Schema(alloc::string::String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Predator,
    Prey,
}

impl Species {
    pub const ALL: [Species; 2] = [Species::Predator, Species::Prey];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Species::Predator => 0,
            Species::Prey => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::Predator => "predator",
            Species::Prey => "prey",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Ratio-based spawning.
    Env1,
    /// Proximity mating plus one forced birth per species and tick.
    Env2,
    /// Ratio-based spawning with heritable traits.
    Env3,
}

impl Scenario {
    pub fn has_traits(self) -> bool {
        matches!(self, Scenario::Env3)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: u32,
    pub y: u32,
}

impl Pos {
    pub const fn new(x: u32, y: u32) -> Self {
        Pos { x, y }
    }

    #[inline]
    pub fn cell(self, width: u32) -> usize {
        self.y as usize * width as usize + self.x as usize
    }

    fn from_cell(cell: usize, width: u32) -> Self {
        Pos::new((cell % width as usize) as u32, (cell / width as usize) as u32)
    }
}

/// Orientation-free cardinal moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Right,
    Left,
    Up,
    Down,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Right, Action::Left, Action::Up, Action::Down];
    pub const COUNT: usize = 4;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    /// Unit displacement; `Up` decreases `y`.
    #[inline]
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Right => (1, 0),
            Action::Left => (-1, 0),
            Action::Up => (0, -1),
            Action::Down => (0, 1),
        }
    }
}

/// Adds `delta` to `pos` on a `dims.0 x dims.1` torus.
#[inline]
pub fn wrap(pos: Pos, delta: (i32, i32), dims: (u32, u32)) -> Pos {
    let x = (pos.x as i64 + delta.0 as i64).rem_euclid(dims.0 as i64);
    let y = (pos.y as i64 + delta.1 as i64).rem_euclid(dims.1 as i64);
    Pos::new(x as u32, y as u32)
}

/// Signed shortest displacement from `a` to `b` on the torus.
#[inline]
pub fn torus_offset(a: Pos, b: Pos, dims: (u32, u32)) -> (i32, i32) {
    fn axis(a: u32, b: u32, n: u32) -> i32 {
        let n = n as i64;
        let mut d = (b as i64 - a as i64).rem_euclid(n);
        if d > n / 2 {
            d -= n;
        }
        d as i32
    }
    (axis(a.x, b.x, dims.0), axis(a.y, b.y, dims.1))
}

#[inline]
pub fn chebyshev(d: (i32, i32)) -> u32 {
    d.0.unsigned_abs().max(d.1.unsigned_abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub species: Species,
    pub pos: Pos,
    /// Predators: current health. Preys: [`PREY_HEALTH`].
    pub health: f64,
    /// Heritable traits; only meaningful in [`Scenario::Env3`].
    pub traits: Genome,
    /// Accumulated attack received; a prey's remaining resilience is
    /// `traits.resilience - damage`.
    pub damage: f64,
    pub policy: PolicyKind,
    pub identity: Vec<f64>,
    pub memory: RecurrentState,
    pub birth_tick: u64,
}

impl AgentState {
    pub fn resilience_left(&self) -> f64 {
        self.traits.resilience - self.damage
    }
}

/// Per-tick population summary; the trait means are `None` for empty species.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PopulationRecord {
    pub tick: u64,
    pub n_predator: usize,
    pub n_prey: usize,
    pub mean_attack: Option<f64>,
    pub mean_resilience: Option<f64>,
    pub mean_speed_pred: Option<f64>,
    pub mean_speed_prey: Option<f64>,
    pub mean_health: Option<f64>,
}

/// Serializable image of a [`World`]; the spatial index is rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldCheckpoint {
    pub schema: alloc::string::String,
    pub scenario: Scenario,
    pub config: WorldConfig,
    pub repro: ReproConfig,
    pub tick: u64,
    pub next_id: u64,
    pub rng: SimRng,
    pub walls: Vec<u32>,
    pub birth_policy: [PolicyMix; 2],
    pub agents: Vec<AgentState>,
}

#[derive(Clone)]
pub struct World {
    config: WorldConfig,
    repro: ReproConfig,
    scenario: Scenario,
    walls: Vec<bool>,
    agents: Vec<AgentState>,
    next_id: u64,
    tick: u64,
    rng: SimRng,
    birth_policy: [PolicyMix; 2],
    index: SpatialIndex,
}

impl fmt::Debug for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("World")
            .field("scenario", &self.scenario)
            .field("tick", &self.tick)
            .field("agents", &self.agents.len())
            .finish()
    }
}

/// Initial population and the policy composition of each species.
#[derive(Clone, Debug)]
pub struct Populate {
    pub n_predator: usize,
    pub n_prey: usize,
    pub predator_policy: PolicyMix,
    pub prey_policy: PolicyMix,
}

impl Populate {
    pub fn uniform(n_predator: usize, n_prey: usize, policy: PolicyKind) -> Self {
        Populate {
            n_predator,
            n_prey,
            predator_policy: PolicyMix::single(policy),
            prey_policy: PolicyMix::single(policy),
        }
    }
}

/// Builds a world with walls and the initial population placed on distinct
/// free cells drawn from the world stream of `config.seed`.
pub fn init_world(
    config: WorldConfig,
    repro: ReproConfig,
    scenario: Scenario,
    population: &Populate,
) -> Result<World, WorldError> {
    config.validate()?;
    repro.validate().map_err(WorldError::Config)?;
    let mut rng = rng::stream(config.seed, Stream::World);
    let cells = config.cells();
    let n_walls = crate::math::round(config.wall_fraction * cells as f64) as usize;
    let mut walls = alloc::vec![false; cells];
    for c in sample(&mut rng, cells, n_walls.min(cells)).into_iter() {
        walls[c] = true;
    }
    let free: Vec<usize> = (0..cells).filter(|&c| !walls[c]).collect();
    let requested = population.n_predator + population.n_prey;
    if requested > free.len() {
        return Err(WorldError::Overcrowded { requested, available: free.len() });
    }
    let mut world = World {
        config,
        repro,
        scenario,
        walls,
        agents: Vec::with_capacity(requested),
        next_id: 1,
        tick: 0,
        rng,
        birth_policy: [population.predator_policy.clone(), population.prey_policy.clone()],
        index: spatial::empty_index(),
    };
    let spots = sample(&mut world.rng, free.len(), requested).into_vec();
    let kinds_pred = population.predator_policy.allocate(population.n_predator);
    let kinds_prey = population.prey_policy.allocate(population.n_prey);
    for (k, spot) in spots.into_iter().enumerate() {
        let (species, policy) = if k < population.n_predator {
            (Species::Predator, kinds_pred[k])
        } else {
            (Species::Prey, kinds_prey[k - population.n_predator])
        };
        let traits = world.initial_genome();
        let pos = Pos::from_cell(free[spot], world.config.width);
        world.push_agent(species, pos, traits, policy);
    }
    world.reindex();
    Ok(world)
}

impl World {
    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn repro(&self) -> &ReproConfig {
        &self.repro
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.config.width, self.config.height)
    }

    /// Living agents in ascending id order.
    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentState] {
        &mut self.agents
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.slot_of(id).map(|i| &self.agents[i])
    }

    pub fn slot_of(&self, id: AgentId) -> Option<usize> {
        self.agents.binary_search_by_key(&id, |a| a.id).ok()
    }

    pub fn count(&self, species: Species) -> usize {
        self.agents.iter().filter(|a| a.species == species).count()
    }

    pub fn is_wall(&self, pos: Pos) -> bool {
        self.walls[pos.cell(self.config.width)]
    }

    pub fn wall_cells(&self) -> impl Iterator<Item = Pos> + '_ {
        let w = self.config.width;
        self.walls.iter().enumerate().filter(|(_, &b)| b).map(move |(c, _)| Pos::from_cell(c, w))
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    pub fn birth_policy(&self, species: Species) -> &PolicyMix {
        &self.birth_policy[species.index()]
    }

    pub fn set_birth_policy(&mut self, species: Species, mix: PolicyMix) {
        self.birth_policy[species.index()] = mix;
    }

    /// Moves every agent and wall by `delta` on the torus.
    pub fn translate(&mut self, delta: (i32, i32)) {
        let dims = self.dims();
        let w = self.config.width;
        let mut walls = alloc::vec![false; self.walls.len()];
        for (c, &b) in self.walls.iter().enumerate() {
            if b {
                walls[wrap(Pos::from_cell(c, w), delta, dims).cell(w)] = true;
            }
        }
        self.walls = walls;
        for a in &mut self.agents {
            a.pos = wrap(a.pos, delta, dims);
        }
        self.reindex();
    }

    /// Places or replaces walls; used to build hand-made scenarios.
    pub fn set_wall(&mut self, pos: Pos, wall: bool) {
        let c = pos.cell(self.config.width);
        self.walls[c] = wall;
    }

    /// Moves a living agent to `pos`; used to build hand-made scenarios.
    pub fn place(&mut self, id: AgentId, pos: Pos) -> Result<(), WorldError> {
        let slot = self.slot_of(id).ok_or(WorldError::UnknownAgent(id))?;
        self.agents[slot].pos = pos;
        self.reindex();
        Ok(())
    }

    /// Adds an agent at `pos` with a fresh id, identity and health draw.
    pub fn spawn_at(&mut self, species: Species, pos: Pos, traits: Genome, policy: PolicyKind) -> AgentId {
        let id = self.push_agent(species, pos, traits, policy);
        self.reindex();
        id
    }

    pub(crate) fn push_agent(&mut self, species: Species, pos: Pos, traits: Genome, policy: PolicyKind) -> AgentId {
        let id = AgentId(self.next_id);
        self.next_id += 1;
        let health = match species {
            Species::Predator => self.rng.random_range(0.5..=1.0f64).min(self.config.health_cap),
            Species::Prey => PREY_HEALTH,
        };
        let identity: Vec<f64> =
            (0..self.config.id_dim).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        self.agents.push(AgentState {
            id,
            species,
            pos,
            health,
            traits,
            damage: 0.0,
            policy,
            identity,
            memory: RecurrentState::default(),
            birth_tick: self.tick,
        });
        id
    }

    pub(crate) fn initial_genome(&mut self) -> Genome {
        if self.scenario.has_traits() {
            let lo = self.repro.initial_genome_low;
            let hi = self.repro.initial_genome_high;
            let mut draw = |a: f64, b: f64| if b > a { self.rng.random_range(a..b) } else { a };
            Genome { attack: draw(lo.attack, hi.attack), resilience: draw(lo.resilience, hi.resilience), speed: draw(lo.speed, hi.speed) }
        } else {
            Genome::UNIT
        }
    }

    /// Removes agents by id, returning them in ascending id order.
    pub fn remove(&mut self, ids: &[AgentId]) -> Vec<AgentState> {
        if ids.is_empty() {
            return Vec::new();
        }
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        let mut gone = Vec::with_capacity(ids.len());
        let mut kept = Vec::with_capacity(self.agents.len());
        for a in self.agents.drain(..) {
            if sorted.binary_search(&a.id).is_ok() {
                gone.push(a);
            } else {
                kept.push(a);
            }
        }
        self.agents = kept;
        self.reindex();
        gone
    }

    pub(crate) fn reindex(&mut self) {
        self.index.rebuild(self.config.width, self.config.height, &self.agents);
    }

    pub(crate) fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub(crate) fn occupied(&self, pos: Pos) -> bool {
        self.index.occupied(pos.cell(self.config.width))
    }

    pub(crate) fn is_free(&self, pos: Pos) -> bool {
        !self.is_wall(pos) && !self.occupied(pos)
    }

    /// Nearest agent of `species` within Chebyshev `radius` of `from`,
    /// excluding the slot `skip`. Ties go to the lowest id.
    pub fn nearest(&self, from: Pos, species: Species, radius: u32, skip: Option<usize>) -> Option<(usize, (i32, i32))> {
        let mut best: Option<(u32, usize, (i32, i32))> = None;
        self.index.for_each_near(species, from.x, from.y, radius, |dx, dy, slot| {
            let slot = slot as usize;
            if Some(slot) == skip {
                return;
            }
            let d = chebyshev((dx, dy));
            let better = match best {
                None => true,
                Some((bd, bs, _)) => d < bd || (d == bd && slot < bs),
            };
            if better {
                best = Some((d, slot, (dx, dy)));
            }
        });
        best.map(|(_, s, off)| (s, off))
    }

    pub fn snapshot(&self) -> PopulationRecord {
        fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
            let (mut s, mut n) = (0.0, 0usize);
            for v in it {
                s += v;
                n += 1;
            }
            (n > 0).then(|| s / n as f64)
        }
        let preds = || self.agents.iter().filter(|a| a.species == Species::Predator);
        let preys = || self.agents.iter().filter(|a| a.species == Species::Prey);
        PopulationRecord {
            tick: self.tick,
            n_predator: preds().count(),
            n_prey: preys().count(),
            mean_attack: mean(preds().map(|a| a.traits.attack)),
            mean_resilience: mean(preys().map(|a| a.traits.resilience)),
            mean_speed_pred: mean(preds().map(|a| a.traits.speed)),
            mean_speed_prey: mean(preys().map(|a| a.traits.speed)),
            mean_health: mean(preds().map(|a| a.health)),
        }
    }

    pub fn to_checkpoint(&self) -> WorldCheckpoint {
        WorldCheckpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            scenario: self.scenario,
            config: self.config.clone(),
            repro: self.repro.clone(),
            tick: self.tick,
            next_id: self.next_id,
            rng: self.rng.clone(),
            walls: self.walls.iter().enumerate().filter(|(_, &b)| b).map(|(c, _)| c as u32).collect(),
            birth_policy: self.birth_policy.clone(),
            agents: self.agents.clone(),
        }
    }

    pub fn from_checkpoint(cp: WorldCheckpoint) -> Result<World, WorldError> {
        if cp.schema != CHECKPOINT_SCHEMA {
            return Err(WorldError::Schema(cp.schema));
        }
        cp.config.validate()?;
        let cells = cp.config.cells();
        let mut walls = alloc::vec![false; cells];
        for c in cp.walls {
            *walls.get_mut(c as usize).ok_or(WorldError::Config("wall cell outside the grid"))? = true;
        }
        let in_grid = |p: Pos| p.x < cp.config.width && p.y < cp.config.height;
        if !cp.agents.iter().all(|a| in_grid(a.pos)) || !cp.agents.windows(2).all(|w| w[0].id < w[1].id) {
            return Err(WorldError::Config("agent table out of grid or not sorted by id"));
        }
        let mut world = World {
            config: cp.config,
            repro: cp.repro,
            scenario: cp.scenario,
            walls,
            agents: cp.agents,
            next_id: cp.next_id,
            tick: cp.tick,
            rng: cp.rng,
            birth_policy: cp.birth_policy,
            index: spatial::empty_index(),
        };
        world.reindex();
        Ok(world)
    }

    /// Order-sensitive FNV-1a digest over the full state, for isolation and
    /// determinism checks.
    pub fn state_hash(&self) -> u64 {
        let mut h = Fnv::new();
        h.u64(self.tick);
        h.u64(self.next_id);
        for (c, &b) in self.walls.iter().enumerate() {
            if b {
                h.u64(c as u64);
            }
        }
        for a in &self.agents {
            h.u64(a.id.0);
            h.u64(a.species.index() as u64);
            h.u64(a.pos.x as u64);
            h.u64(a.pos.y as u64);
            h.f64(a.health);
            h.f64(a.damage);
            h.f64(a.traits.attack);
            h.f64(a.traits.resilience);
            h.f64(a.traits.speed);
            for &v in &a.identity {
                h.f64(v);
            }
            for &v in a.memory.hidden.iter().chain(a.memory.cell.iter()) {
                h.f64(v);
            }
        }
        let mut probe = self.rng.clone();
        h.u64(probe.random::<u64>());
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn finish(&self) -> u64 {
        self.0
    }
}
