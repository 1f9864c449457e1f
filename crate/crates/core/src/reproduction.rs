//! Birth regimes: ratio spawning, proximity mating and trait recombination.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::policy::PolicyKind;
use crate::rng::SimRng;
use crate::world::{chebyshev, AgentId, AgentState, Pos, Scenario, Species, StepOutcome, World};

/// Heritable physical traits. Predators use attack and speed, preys
/// resilience and speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub attack: f64,
    pub resilience: f64,
    pub speed: f64,
}

impl Genome {
    pub const UNIT: Genome = Genome { attack: 1.0, resilience: 1.0, speed: 1.0 };

    fn components(self) -> [f64; 3] {
        [self.attack, self.resilience, self.speed]
    }

    fn from_components(c: [f64; 3]) -> Genome {
        Genome { attack: c[0], resilience: c[1], speed: c[2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproConfig {
    /// Per-tick birth ratio for predators (Env1, Env3).
    pub p_predator: f64,
    pub p_prey: f64,
    /// Guarantee at least one ratio birth per species and tick.
    pub floor_one: bool,
    /// Side of the square mating scope (Env2); odd.
    pub mating_scope: u32,
    pub mate_prob_predator: f64,
    pub mate_prob_prey: f64,
    pub mating_reward: f64,
    /// Per-component probability of adding a standard normal draw (Env3).
    pub mutation_prob: f64,
    /// Draw a separate blend ratio for every trait instead of one per child.
    pub per_component_ratio: bool,
    /// Initial traits are uniform between these bounds (Env3).
    pub initial_genome_low: Genome,
    pub initial_genome_high: Genome,
}

impl Default for ReproConfig {
    fn default() -> Self {
        ReproConfig {
            p_predator: 0.003,
            p_prey: 0.006,
            floor_one: true,
            mating_scope: 15,
            mate_prob_predator: 0.003,
            mate_prob_prey: 0.006,
            mating_reward: 4.0,
            mutation_prob: 1e-3,
            per_component_ratio: false,
            initial_genome_low: Genome { attack: 1.0, resilience: 1.0, speed: 0.5 },
            initial_genome_high: Genome { attack: 2.0, resilience: 2.0, speed: 1.5 },
        }
    }
}

impl ReproConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let probs = [self.p_predator, self.p_prey, self.mate_prob_predator, self.mate_prob_prey, self.mutation_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("birth ratios and probabilities must lie in [0, 1]");
        }
        if self.mating_scope % 2 == 0 {
            return Err("mating_scope must be odd");
        }
        let lo = self.initial_genome_low.components();
        let hi = self.initial_genome_high.components();
        if lo.iter().zip(&hi).any(|(l, h)| !(*l >= 0.0 && l <= h)) {
            return Err("initial genome bounds must satisfy 0 <= low <= high");
        }
        Ok(())
    }

    pub fn ratio(&self, species: Species) -> f64 {
        match species {
            Species::Predator => self.p_predator,
            Species::Prey => self.p_prey,
        }
    }

    pub fn mate_prob(&self, species: Species) -> f64 {
        match species {
            Species::Predator => self.mate_prob_predator,
            Species::Prey => self.mate_prob_prey,
        }
    }
}

/// Ratio births for a population of `n`: `round(n * p)`, raised to one when
/// `floor_one` is set.
pub fn spawn_count(n_current: usize, p: f64, floor_one: bool) -> usize {
    let n = crate::math::round(n_current as f64 * p) as usize;
    if floor_one {
        n.max(1)
    } else {
        n
    }
}

/// `r * a + (1 - r) * b`, component-wise.
pub fn blend(a: Genome, b: Genome, r: f64) -> Genome {
    let (pa, pb) = (a.components(), b.components());
    Genome::from_components(core::array::from_fn(|k| r * pa[k] + (1.0 - r) * pb[k]))
}

/// Blend crossover followed by per-component Gaussian mutation, clamped at 0.
pub fn recombine(a: Genome, b: Genome, cfg: &ReproConfig, rng: &mut SimRng) -> Genome {
    let (pa, pb) = (a.components(), b.components());
    let shared: f64 = rng.random();
    let mut child = [0.0; 3];
    for k in 0..3 {
        let r = if cfg.per_component_ratio { rng.random() } else { shared };
        let mut v = r * pa[k] + (1.0 - r) * pb[k];
        if cfg.mutation_prob > 0.0 && rng.random::<f64>() < cfg.mutation_prob {
            let eps: f64 = StandardNormal.sample(rng);
            v += eps;
        }
        child[k] = v.max(0.0);
    }
    Genome::from_components(child)
}

/// Two distinct living parents drawn uniformly, the lone survivor twice, or
/// `None` for an extinct species.
pub fn select_parents(world: &World, species: Species, rng: &mut SimRng) -> Option<(AgentId, AgentId)> {
    let pool: Vec<AgentId> = world.agents().iter().filter(|a| a.species == species).map(|a| a.id).collect();
    pick_pair(&pool, rng)
}

fn pick_pair(pool: &[AgentId], rng: &mut SimRng) -> Option<(AgentId, AgentId)> {
    match pool.len() {
        0 => None,
        1 => Some((pool[0], pool[0])),
        n => {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            Some((pool[i], pool[j]))
        }
    }
}

/// Same-type parents breed true; mixed parents pass on either type with
/// probability one half.
pub fn inherit_policy(a: PolicyKind, b: PolicyKind, rng: &mut SimRng) -> PolicyKind {
    if a == b || rng.random::<bool>() {
        a
    } else {
        b
    }
}

fn random_free_cell(world: &mut World, claimed: &[usize]) -> Option<Pos> {
    let (w, h) = world.dims();
    let width = w;
    let ok = |world: &World, p: Pos| world.is_free(p) && !claimed.contains(&p.cell(width));
    for _ in 0..64 {
        let p = Pos::new(world.rng_mut().random_range(0..w), world.rng_mut().random_range(0..h));
        if ok(world, p) {
            return Some(p);
        }
    }
    let free: Vec<Pos> =
        (0..h).flat_map(|y| (0..w).map(move |x| Pos::new(x, y))).filter(|&p| ok(world, p)).collect();
    if free.is_empty() {
        None
    } else {
        let k = world.rng_mut().random_range(0..free.len());
        Some(free[k])
    }
}

fn free_cell_near(world: &mut World, centre: Pos, radius: u32, claimed: &[usize]) -> Option<Pos> {
    let dims = world.dims();
    let r = radius.min((dims.0.min(dims.1) - 1) / 2) as i32;
    let mut free = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let p = crate::world::wrap(centre, (dx, dy), dims);
            if world.is_free(p) && !claimed.contains(&p.cell(dims.0)) {
                free.push(p);
            }
        }
    }
    if free.is_empty() {
        None
    } else {
        let k = world.rng_mut().random_range(0..free.len());
        Some(free[k])
    }
}

fn room(world: &World) -> usize {
    (world.config().max_population as usize).saturating_sub(world.agents().len())
}

/// Adds up to `count` agents of `species` on random free cells, truncated to
/// the remaining capacity. In Env3 each child's genome recombines two parents
/// drawn from the population present before this call. Returns the
/// newborns; cells may run out, in which case fewer are returned.
pub fn spawn_uniform(world: &mut World, species: Species, count: usize) -> Vec<AgentState> {
    let count = count.min(room(world));
    if count == 0 {
        return Vec::new();
    }
    let pool: Vec<(AgentId, Genome, PolicyKind)> = world
        .agents()
        .iter()
        .filter(|a| a.species == species)
        .map(|a| (a.id, a.traits, a.policy))
        .collect();
    let ids: Vec<AgentId> = pool.iter().map(|p| p.0).collect();
    let lookup = |id: AgentId| pool[ids.binary_search(&id).unwrap()];
    let mut claimed = Vec::with_capacity(count);
    let first_new = world.agents().len();
    for _ in 0..count {
        let (traits, policy) = if world.scenario() == Scenario::Env3 {
            let repro = world.repro().clone();
            match pick_pair(&ids, world.rng_mut()) {
                Some((a, b)) => {
                    let (pa, pb) = (lookup(a), lookup(b));
                    let g = recombine(pa.1, pb.1, &repro, world.rng_mut());
                    (g, inherit_policy(pa.2, pb.2, world.rng_mut()))
                }
                None => {
                    let g = world.initial_genome();
                    let mix = world.birth_policy(species).clone();
                    (g, mix.draw(world.rng_mut()))
                }
            }
        } else {
            let mix = world.birth_policy(species).clone();
            (crate::reproduction::Genome::UNIT, mix.draw(world.rng_mut()))
        };
        if species == Species::Prey && world.scenario() == Scenario::Env3 && traits.resilience <= 0.0 {
            continue;
        }
        let Some(pos) = random_free_cell(world, &claimed) else {
            break;
        };
        claimed.push(pos.cell(world.dims().0));
        world.push_agent(species, pos, traits, policy);
    }
    world.reindex();
    world.agents()[first_new..].to_vec()
}

/// Result of one Env2 mating scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MateOutcome {
    pub pairs: Vec<(AgentId, AgentId)>,
    pub rewards: BTreeMap<AgentId, f64>,
    pub born: Vec<AgentState>,
}

/// Env2 mating. Agents are scanned in ascending id; an unmated agent pairs
/// with its nearest unmated same-species neighbour inside the mating scope
/// with the species' mating probability. Every pair yields one child on a
/// free cell of the first parent's scope and the mating reward for both
/// parents. One predator and one prey are then force-spawned.
pub fn mate_pass(world: &mut World) -> MateOutcome {
    let cfg = world.repro().clone();
    let reach = (cfg.mating_scope - 1) / 2;
    let n = world.agents().len();
    let mut mated = alloc::vec![false; n];
    let mut out = MateOutcome::default();
    let mut claimed: Vec<usize> = Vec::new();
    let first_new = n;
    for i in 0..n {
        if mated[i] {
            continue;
        }
        let me = &world.agents()[i];
        let (species, pos) = (me.species, me.pos);
        let mut best: Option<(u32, usize)> = None;
        world.index().for_each_near(species, pos.x, pos.y, reach, |dx, dy, slot| {
            let slot = slot as usize;
            if slot == i || mated[slot] {
                return;
            }
            let d = chebyshev((dx, dy));
            if best.is_none_or(|(bd, bs)| d < bd || (d == bd && slot < bs)) {
                best = Some((d, slot));
            }
        });
        let Some((_, j)) = best else { continue };
        if world.rng_mut().random::<f64>() >= cfg.mate_prob(species) {
            continue;
        }
        if room(world) == 0 {
            continue;
        }
        let Some(cell) = free_cell_near(world, pos, reach, &claimed) else { continue };
        let (a, b) = (&world.agents()[i], &world.agents()[j]);
        let (ida, idb, pa, pb) = (a.id, b.id, a.policy, b.policy);
        let policy = inherit_policy(pa, pb, world.rng_mut());
        claimed.push(cell.cell(world.dims().0));
        world.push_agent(species, cell, Genome::UNIT, policy);
        mated[i] = true;
        mated[j] = true;
        out.pairs.push((ida, idb));
        *out.rewards.entry(ida).or_insert(0.0) += cfg.mating_reward;
        *out.rewards.entry(idb).or_insert(0.0) += cfg.mating_reward;
    }
    world.reindex();
    out.born = world.agents()[first_new..].to_vec();
    for s in Species::ALL {
        out.born.extend(spawn_uniform(world, s, 1));
    }
    out
}

/// Runs the scenario's birth regime after a [`World::step`], appending the
/// newborns and any reproduction rewards to `outcome`.
pub fn birth_pass(world: &mut World, outcome: &mut StepOutcome) {
    match world.scenario() {
        Scenario::Env1 | Scenario::Env3 => {
            let floor = world.repro().floor_one;
            let counts: Vec<(Species, usize)> = Species::ALL
                .iter()
                .map(|&s| (s, spawn_count(world.count(s), world.repro().ratio(s), floor)))
                .collect();
            for (s, c) in counts {
                outcome.born.extend(spawn_uniform(world, s, c));
            }
        }
        Scenario::Env2 => {
            let m = mate_pass(world);
            for (id, r) in m.rewards {
                outcome.add_reward(id, r);
            }
            outcome.born.extend(m.born);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn spawn_count_examples() {
        assert_eq!(spawn_count(1000, 0.003, true), 3);
        assert_eq!(spawn_count(0, 0.003, true), 1);
        assert_eq!(spawn_count(100, 0.0, false), 0);
        assert_eq!(spawn_count(100, 0.003, false), 0);
    }

    #[test]
    fn recombine_boundaries() {
        let cfg = ReproConfig { mutation_prob: 0.0, ..ReproConfig::default() };
        let a = Genome { attack: 2.0, resilience: 1.0, speed: 0.0 };
        let b = Genome { attack: 4.0, resilience: 3.0, speed: 2.0 };
        let mut rng = stream(1, Stream::World);
        for _ in 0..1000 {
            let c = recombine(a, b, &cfg, &mut rng);
            // one shared ratio: every component sits at the same relative point
            let r = (c.attack - 4.0) / (2.0 - 4.0);
            assert!((0.0..=1.0).contains(&r));
            assert!((c.resilience - (r * 1.0 + (1.0 - r) * 3.0)).abs() < 1e-12);
            assert!((c.speed - (1.0 - r) * 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lone_survivor_is_both_parents() {
        let ids = [AgentId(9)];
        let mut rng = stream(3, Stream::World);
        assert_eq!(pick_pair(&ids, &mut rng), Some((AgentId(9), AgentId(9))));
        assert_eq!(pick_pair(&[], &mut rng), None);
    }

    #[test]
    fn inheritance_rule() {
        let mut rng = stream(5, Stream::World);
        let fixed = PolicyKind::Learned { frozen: true };
        for _ in 0..100 {
            assert_eq!(inherit_policy(fixed, fixed, &mut rng), fixed);
        }
        let n = 10_000;
        let random_children = (0..n)
            .filter(|_| inherit_policy(PolicyKind::Random, fixed, &mut rng) == PolicyKind::Random)
            .count();
        let frac = random_children as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }
}
