use predprey_core::policy::{PolicyKind, PolicyMix};
use predprey_core::reproduction::{blend, mate_pass, recombine, select_parents, spawn_count, spawn_uniform, Genome, ReproConfig};
use predprey_core::rng::{stream, Stream};
use predprey_core::world::{init_world, AgentId, Populate, Pos, Scenario, Species, World, WorldConfig};
use proptest::prelude::*;

fn world(w: u32, scenario: Scenario, repro: ReproConfig) -> World {
    let c = WorldConfig {
        width: w,
        height: w,
        wall_fraction: 0.0,
        obs_radius: 2,
        channels: if scenario == Scenario::Env3 { 7 } else { 4 },
        seed: 5,
        ..WorldConfig::default()
    };
    init_world(c, repro, scenario, &Populate::uniform(0, 0, PolicyKind::Random)).unwrap()
}

fn g(v: f64) -> Genome {
    Genome { attack: v, resilience: v, speed: v }
}

#[test]
fn blend_examples() {
    assert_eq!(blend(g(2.0), g(4.0), 0.5).attack, 3.0);
    assert_eq!(blend(g(2.0), g(4.0), 0.0), g(4.0));
    assert_eq!(blend(g(2.0), g(4.0), 1.0), g(2.0));
}

#[test]
fn child_mean_is_midpoint() {
    let cfg = ReproConfig { mutation_prob: 0.0, ..ReproConfig::default() };
    let mut rng = stream(8, Stream::World);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let c = recombine(g(2.0), g(4.0), &cfg, &mut rng);
        assert!((2.0..=4.0).contains(&c.attack));
        sum += c.attack;
    }
    assert!((sum / n as f64 - 3.0).abs() < 0.02);
}

#[test]
fn mutation_rate_is_respected() {
    let cfg = ReproConfig { mutation_prob: 0.1, ..ReproConfig::default() };
    let mut rng = stream(9, Stream::World);
    let n = 20_000;
    let mutated = (0..n).filter(|_| recombine(g(3.0), g(3.0), &cfg, &mut rng).attack != 3.0).count();
    let frac = mutated as f64 / n as f64;
    assert!((frac - 0.1).abs() < 0.01, "{frac}");
}

proptest! {
    #[test]
    fn spawn_count_is_monotone(n in 0usize..5000, p in 0.0f64..0.1, dn in 0usize..100, dp in 0.0f64..0.01, floor in any::<bool>()) {
        prop_assert!(spawn_count(n + dn, p, floor) >= spawn_count(n, p, floor));
        prop_assert!(spawn_count(n, p + dp, floor) >= spawn_count(n, p, floor));
    }

    #[test]
    fn recombine_is_bounded(a in prop::array::uniform3(0.0f64..10.0), b in prop::array::uniform3(0.0f64..10.0), seed in 0u64..1000) {
        let cfg = ReproConfig { mutation_prob: 0.0, ..ReproConfig::default() };
        let ga = Genome { attack: a[0], resilience: a[1], speed: a[2] };
        let gb = Genome { attack: b[0], resilience: b[1], speed: b[2] };
        let c = recombine(ga, gb, &cfg, &mut stream(seed, Stream::World));
        for (v, (x, y)) in [c.attack, c.resilience, c.speed].into_iter().zip(a.into_iter().zip(b)) {
            prop_assert!(v >= x.min(y) - 1e-12 && v <= x.max(y) + 1e-12);
        }
    }
}

#[test]
fn parent_selection_is_uniform() {
    let mut w = world(20, Scenario::Env3, ReproConfig::default());
    for k in 0..10 {
        w.spawn_at(Species::Prey, Pos::new(k, 0), g(1.0), PolicyKind::Random);
    }
    let ids: Vec<AgentId> = w.agents().iter().map(|a| a.id).collect();
    let mut rng = stream(2, Stream::World);
    let mut first = [0usize; 10];
    let mut pairs = vec![0usize; 100];
    let n = 10_000;
    for _ in 0..n {
        let (a, b) = select_parents(&w, Species::Prey, &mut rng).unwrap();
        assert_ne!(a, b);
        let (i, j) = (ids.iter().position(|x| *x == a).unwrap(), ids.iter().position(|x| *x == b).unwrap());
        first[i] += 1;
        pairs[i * 10 + j] += 1;
    }
    let chi = |obs: &[usize], e: f64| obs.iter().map(|&o| (o as f64 - e).powi(2) / e).sum::<f64>();
    // 1% critical values: 21.67 (9 df) and 122.94 (89 df).
    assert!(chi(&first, n as f64 / 10.0) < 21.67);
    let ordered: Vec<usize> = (0..100).filter(|k| k / 10 != k % 10).map(|k| pairs[k]).collect();
    assert!(chi(&ordered, n as f64 / 90.0) < 122.94);

    let mut two = world(10, Scenario::Env3, ReproConfig::default());
    let a = two.spawn_at(Species::Predator, Pos::new(0, 0), g(1.0), PolicyKind::Random);
    let b = two.spawn_at(Species::Predator, Pos::new(1, 0), g(1.0), PolicyKind::Random);
    let ab = (0..2000).filter(|_| select_parents(&two, Species::Predator, &mut rng) == Some((a, b))).count();
    assert!((ab as f64 / 2000.0 - 0.5).abs() < 0.05);
    two.remove(&[b]);
    assert_eq!(select_parents(&two, Species::Predator, &mut rng), Some((a, a)));
}

#[test]
fn spawn_uses_birth_policy_and_capacity() {
    let mut w = world(10, Scenario::Env1, ReproConfig::default());
    w.set_birth_policy(Species::Prey, PolicyMix::single(PolicyKind::ScriptedFlee));
    let born = spawn_uniform(&mut w, Species::Prey, 3);
    assert_eq!(born.len(), 3);
    assert!(born.iter().all(|a| a.policy == PolicyKind::ScriptedFlee && a.species == Species::Prey));

    let mut c = w.config().clone();
    c.max_population = 5;
    let mut small = init_world(c, ReproConfig::default(), Scenario::Env1, &Populate::uniform(1, 1, PolicyKind::Random)).unwrap();
    let born = spawn_uniform(&mut small, Species::Predator, 10);
    assert_eq!(born.len(), 3);
    assert_eq!(small.agents().len(), 5);
}

#[test]
fn env3_children_lie_between_two_parents() {
    let repro = ReproConfig { mutation_prob: 0.0, ..ReproConfig::default() };
    let mut w = world(20, Scenario::Env3, repro);
    w.spawn_at(Species::Predator, Pos::new(0, 0), Genome { attack: 1.0, resilience: 0.0, speed: 1.0 }, PolicyKind::Random);
    w.spawn_at(Species::Predator, Pos::new(5, 5), Genome { attack: 3.0, resilience: 0.0, speed: 2.0 }, PolicyKind::Random);
    let born = spawn_uniform(&mut w, Species::Predator, 50);
    assert_eq!(born.len(), 50);
    for c in born {
        assert!((1.0..=3.0).contains(&c.traits.attack));
        let r = (c.traits.attack - 3.0) / (1.0 - 3.0);
        assert!((c.traits.speed - (r + (1.0 - r) * 2.0)).abs() < 1e-12);
    }
}

fn mating(prob: f64) -> ReproConfig {
    ReproConfig { mate_prob_prey: prob, mate_prob_predator: prob, ..ReproConfig::default() }
}

#[test]
fn mating_pair_gets_child_and_rewards() {
    let mut w = world(30, Scenario::Env2, mating(1.0));
    let a = w.spawn_at(Species::Prey, Pos::new(3, 3), Genome::UNIT, PolicyKind::Random);
    let b = w.spawn_at(Species::Prey, Pos::new(8, 3), Genome::UNIT, PolicyKind::Random);
    let out = mate_pass(&mut w);
    assert_eq!(out.pairs, vec![(a, b)]);
    assert_eq!(out.rewards[&a], 4.0);
    assert_eq!(out.rewards[&b], 4.0);
    // the child plus one forced predator and one forced prey
    assert_eq!(out.born.len(), 3);
    assert_eq!(out.born[0].species, Species::Prey);
    assert_eq!(out.born[0].traits, Genome::UNIT);
}

#[test]
fn lone_agent_does_not_mate() {
    let mut w = world(30, Scenario::Env2, mating(1.0));
    w.spawn_at(Species::Prey, Pos::new(3, 3), Genome::UNIT, PolicyKind::Random);
    w.spawn_at(Species::Prey, Pos::new(20, 20), Genome::UNIT, PolicyKind::Random);
    let out = mate_pass(&mut w);
    assert!(out.pairs.is_empty() && out.rewards.is_empty());
    assert_eq!(out.born.len(), 2);
}

#[test]
fn three_in_scope_make_one_pair() {
    let mut w = world(30, Scenario::Env2, mating(1.0));
    let a = w.spawn_at(Species::Prey, Pos::new(3, 3), Genome::UNIT, PolicyKind::Random);
    let b = w.spawn_at(Species::Prey, Pos::new(4, 3), Genome::UNIT, PolicyKind::Random);
    let c = w.spawn_at(Species::Prey, Pos::new(5, 3), Genome::UNIT, PolicyKind::Random);
    let out = mate_pass(&mut w);
    assert_eq!(out.pairs, vec![(a, b)]);
    assert!(!out.rewards.contains_key(&c));
}

#[test]
fn mating_invariants_on_random_worlds() {
    for seed in 0..20 {
        let c = WorldConfig { width: 25, height: 25, wall_fraction: 0.0, obs_radius: 2, seed, ..WorldConfig::default() };
        let mut w = init_world(c, mating(0.5), Scenario::Env2, &Populate::uniform(30, 30, PolicyKind::Random)).unwrap();
        let before = w.agents().len();
        let out = mate_pass(&mut w);
        let mut seen = std::collections::BTreeSet::new();
        for (a, b) in &out.pairs {
            assert!(seen.insert(*a) && seen.insert(*b));
        }
        let total: f64 = out.rewards.values().sum();
        assert_eq!(total, 8.0 * out.pairs.len() as f64);
        assert_eq!(out.born.len(), out.pairs.len() + 2);
        assert_eq!(w.agents().len(), before + out.born.len());
    }
}
