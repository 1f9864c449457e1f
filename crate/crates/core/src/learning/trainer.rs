use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{double_q_target, rollout_window, ReplayBuffer, RmsProp, TrainConfig};
use crate::policy::{
    decide_actions, Brains, Exploration, Gradients, NetworkCheckpoint, NetworkConfig, PolicyError, QNetworkParams,
    RecurrentState, TdTarget,
};
use crate::reproduction::birth_pass;
use crate::rng::{self, SimRng, Stream};
use crate::world::{Action, AgentId, Species, StepOutcome, World};

pub const TRAINER_SCHEMA: &str = "predprey.trainer/1";

/// Online and target networks of one species plus optimiser state.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesLearner {
    pub online: QNetworkParams,
    pub target: QNetworkParams,
    pub optimizer: RmsProp,
    pub updates: u64,
}

impl SpeciesLearner {
    pub fn new(params: QNetworkParams, cfg: &TrainConfig) -> Self {
        let optimizer = RmsProp::new(params.len(), cfg.learning_rate, cfg.rms_decay, cfg.rms_eps);
        SpeciesLearner { target: params.clone(), online: params, optimizer, updates: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchReport {
    pub species: Species,
    /// Mean squared TD error over the batch's active transitions, measured
    /// before the update.
    pub loss: f64,
    pub transitions: usize,
    pub windows: Vec<AgentId>,
    /// The update was skipped because the loss or gradient was not finite.
    pub skipped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub batches: Vec<BatchReport>,
    /// Transitions in the buffer when training started, inert ones included.
    pub buffer_size: usize,
}

impl TrainReport {
    pub fn updates(&self) -> usize {
        self.batches.iter().filter(|b| !b.skipped).count()
    }
}

/// Consumes `buffer`: for each species with a learner, draws whole agent
/// windows without replacement until a batch holds at least `batch_size`
/// active transitions, and performs one optimiser step per batch while at
/// least `batch_size` active transitions remain. The buffer is empty
/// afterwards.
pub fn train_step(
    buffer: &mut ReplayBuffer,
    learners: &mut [Option<SpeciesLearner>; 2],
    cfg: &TrainConfig,
    rng: &mut SimRng,
) -> TrainReport {
    let mut report = TrainReport { buffer_size: buffer.len(), ..TrainReport::default() };
    for species in Species::ALL {
        let Some(learner) = learners[species.index()].as_mut() else { continue };
        let mut order: Vec<usize> = buffer
            .windows
            .iter()
            .enumerate()
            .filter(|(_, w)| w.species == species && w.active() > 0)
            .map(|(k, _)| k)
            .collect();
        let mut remaining: usize = order.iter().map(|&k| buffer.windows[k].active()).sum();
        order.shuffle(rng);
        let mut next = 0;
        while remaining >= cfg.batch_size && next < order.len() {
            let mut batch = Vec::new();
            let mut count = 0;
            while count < cfg.batch_size && next < order.len() {
                count += buffer.windows[order[next]].active();
                batch.push(order[next]);
                next += 1;
            }
            remaining -= count;
            let mut grads = Gradients::zeros_like(&learner.online);
            let mut loss = 0.0;
            let mut ok = true;
            for &k in &batch {
                match window_gradient(&buffer.windows[k], learner, cfg, &mut grads) {
                    Ok(l) => loss += l,
                    Err(_) => ok = false,
                }
            }
            let mean = loss / count as f64;
            grads.scale(1.0 / count as f64);
            let skipped = !(ok && mean.is_finite() && grads.is_finite());
            if !skipped {
                learner.optimizer.step(&mut learner.online, &grads);
                learner.updates += 1;
                if learner.updates % cfg.target_net_period == 0 {
                    learner.target = learner.online.clone();
                }
            }
            report.batches.push(BatchReport {
                species,
                loss: mean,
                transitions: count,
                windows: batch.iter().map(|&k| buffer.windows[k].agent_id).collect(),
                skipped,
            });
        }
    }
    buffer.clear();
    report
}

/// TD targets of a window's active prefix under `online`/`target` and the
/// observation sequence they were computed on (the active steps plus the
/// bootstrap observation, when there is one).
pub(crate) fn window_targets<'w>(
    w: &'w super::AgentWindow,
    online_q: impl FnOnce(&[&[f64]]) -> Result<Vec<[f64; 4]>, PolicyError>,
    target_q: impl FnOnce(&[&[f64]]) -> Result<Vec<[f64; 4]>, PolicyError>,
    cfg: &TrainConfig,
) -> Result<(Vec<&'w [f64]>, Vec<TdTarget>, Vec<[f64; 4]>), PolicyError> {
    let active = w.active();
    let mut obs: Vec<&[f64]> = w.steps[..active].iter().map(|t| t.obs.as_slice()).collect();
    let last_done = w.steps[active - 1].done;
    if !last_done {
        if let Some(f) = w.final_obs.as_deref() {
            obs.push(f);
        }
    }
    let q_on = online_q(&obs)?;
    let q_tg = if cfg.vanilla_max_target { q_on.clone() } else { target_q(&obs)? };
    let targets = w.steps[..active]
        .iter()
        .enumerate()
        .map(|(t, tr)| {
            let done = tr.done || t + 1 >= obs.len();
            let y = if done {
                tr.reward
            } else {
                double_q_target(tr.reward, false, &q_on[t + 1], &q_tg[t + 1], cfg.gamma, cfg.vanilla_max_target)
            };
            TdTarget { action: tr.action, target: y, active: true }
        })
        .collect();
    Ok((obs, targets, q_on))
}

fn window_gradient(
    w: &super::AgentWindow,
    learner: &SpeciesLearner,
    cfg: &TrainConfig,
    grads: &mut Gradients,
) -> Result<f64, PolicyError> {
    let zero = RecurrentState::default();
    let mut cache = None;
    let (obs, targets, _) = window_targets(
        w,
        |obs| {
            let c = learner.online.forward_cached(obs, &w.identity, &zero)?;
            let q = c.q();
            cache = Some(c);
            Ok(q)
        },
        |obs| learner.target.forward_sequence(obs, &w.identity, &zero),
        cfg,
    )?;
    let cache = cache.expect("online pass ran");
    learner.online.backward_cached(&cache, &obs, &w.identity, &targets, grads)
}

/// Acts in the real world with persistent recurrent states and runs the full
/// tick: movement, predation, health, removal of the dead (their memories
/// and identities go with them) and the scenario's birth pass under the
/// population cap.
pub fn commit_real_step(
    world: &mut World,
    brains: &Brains<'_>,
    explore: Exploration,
    rng: &mut SimRng,
) -> Result<StepOutcome, PolicyError> {
    let decisions = decide_actions(world, brains, explore, rng)?;
    let actions: Vec<(AgentId, Action)> = decisions.into_iter().map(|d| (d.id, d.action)).collect();
    let mut outcome = world.step(&actions).expect("actions cover the living agents");
    birth_pass(world, &mut outcome);
    Ok(outcome)
}

#[derive(Clone, Debug)]
pub struct TickReport {
    pub outcome: StepOutcome,
    pub train: Option<TrainReport>,
    pub epsilon: f64,
}

/// The full training loop state: per-species learners, frozen snapshots,
/// schedule position and the behaviour and sampling generators.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub learners: [Option<SpeciesLearner>; 2],
    pub frozen: [Option<QNetworkParams>; 2],
    /// Real ticks committed so far; drives the exploration schedule.
    pub ticks: u64,
    pub behaviour_rng: SimRng,
    pub sampling_rng: SimRng,
}

fn brains_of<'a>(learners: &'a [Option<SpeciesLearner>; 2], frozen: &'a [Option<QNetworkParams>; 2]) -> Brains<'a> {
    Brains {
        live: [learners[0].as_ref().map(|l| &l.online), learners[1].as_ref().map(|l| &l.online)],
        frozen: [frozen[0].as_ref(), frozen[1].as_ref()],
    }
}

impl Trainer {
    /// Fresh networks for the species given a configuration, initialised from
    /// the init stream of `seed` (predator first).
    pub fn new(config: TrainConfig, nets: [Option<NetworkConfig>; 2], seed: u64) -> Self {
        let mut init = rng::stream(seed, Stream::Init);
        let live = nets.map(|c| c.map(|c| QNetworkParams::init(c, &mut init)));
        Trainer::from_params(config, live, seed)
    }

    pub fn from_params(config: TrainConfig, live: [Option<QNetworkParams>; 2], seed: u64) -> Self {
        let learners = live.map(|p| p.map(|p| SpeciesLearner::new(p, &config)));
        Trainer {
            config,
            learners,
            frozen: [None, None],
            ticks: 0,
            behaviour_rng: rng::stream(seed, Stream::Behaviour),
            sampling_rng: rng::stream(seed, Stream::Sampling),
        }
    }

    pub fn brains(&self) -> Brains<'_> {
        brains_of(&self.learners, &self.frozen)
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon_at(self.ticks)
    }

    pub fn exploration(&self) -> Exploration {
        Exploration { continual: self.epsilon(), frozen: self.config.frozen_epsilon }
    }

    /// Total optimiser updates over both species.
    pub fn updates(&self) -> u64 {
        self.learners.iter().flatten().map(|l| l.updates).sum()
    }

    /// One iteration of the training loop: on every `train_every`-th tick a
    /// virtual window is rolled out and trained on; then one real tick is
    /// committed.
    pub fn tick(&mut self, world: &mut World) -> Result<TickReport, PolicyError> {
        let explore = self.exploration();
        let mut train = None;
        let has_learners = world.agents().iter().any(|a| a.policy == crate::policy::PolicyKind::Learned { frozen: false });
        if has_learners && self.ticks % self.config.train_every == 0 {
            let brains = brains_of(&self.learners, &self.frozen);
            let mut buffer = rollout_window(world, &brains, self.config.window, explore, &mut self.behaviour_rng)?;
            train = Some(train_step(&mut buffer, &mut self.learners, &self.config, &mut self.sampling_rng));
        }
        let brains = brains_of(&self.learners, &self.frozen);
        let outcome = commit_real_step(world, &brains, explore, &mut self.behaviour_rng)?;
        self.ticks += 1;
        Ok(TickReport { outcome, train, epsilon: explore.continual })
    }

    pub fn to_checkpoint(&self) -> TrainerCheckpoint {
        let net = |p: Option<&QNetworkParams>| p.map(|p| p.to_checkpoint());
        TrainerCheckpoint {
            schema: TRAINER_SCHEMA.into(),
            config: self.config.clone(),
            live: [0, 1].map(|s| net(self.learners[s].as_ref().map(|l| &l.online))),
            target: [0, 1].map(|s| net(self.learners[s].as_ref().map(|l| &l.target))),
            frozen: [0, 1].map(|s| net(self.frozen[s].as_ref())),
            optimizer: [0, 1].map(|s| self.learners[s].as_ref().map(|l| l.optimizer.clone())),
            updates: [0, 1].map(|s| self.learners[s].as_ref().map_or(0, |l| l.updates)),
            ticks: self.ticks,
            behaviour_rng: self.behaviour_rng.clone(),
            sampling_rng: self.sampling_rng.clone(),
        }
    }

    pub fn from_checkpoint(cp: &TrainerCheckpoint) -> Result<Self, PolicyError> {
        if cp.schema != TRAINER_SCHEMA {
            return Err(PolicyError::Checkpoint("unsupported trainer schema"));
        }
        let load = |c: &Option<NetworkCheckpoint>| c.as_ref().map(QNetworkParams::from_checkpoint).transpose();
        let mut learners: [Option<SpeciesLearner>; 2] = [None, None];
        for s in 0..2 {
            if let Some(online) = load(&cp.live[s])? {
                let target = load(&cp.target[s])?.unwrap_or_else(|| online.clone());
                let optimizer = cp.optimizer[s].clone().unwrap_or_else(|| {
                    RmsProp::new(online.len(), cp.config.learning_rate, cp.config.rms_decay, cp.config.rms_eps)
                });
                if target.config() != online.config() || optimizer.square_avg.len() != online.len() {
                    return Err(PolicyError::Checkpoint("target or optimiser state does not match the network"));
                }
                learners[s] = Some(SpeciesLearner { online, target, optimizer, updates: cp.updates[s] });
            }
        }
        Ok(Trainer {
            config: cp.config.clone(),
            learners,
            frozen: [load(&cp.frozen[0])?, load(&cp.frozen[1])?],
            ticks: cp.ticks,
            behaviour_rng: cp.behaviour_rng.clone(),
            sampling_rng: cp.sampling_rng.clone(),
        })
    }
}

/// Networks for both species, optimiser state, schedule position and
/// generator states: everything needed to resume training exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainerCheckpoint {
    pub schema: String,
    pub config: TrainConfig,
    pub live: [Option<NetworkCheckpoint>; 2],
    pub target: [Option<NetworkCheckpoint>; 2],
    pub frozen: [Option<NetworkCheckpoint>; 2],
    pub optimizer: [Option<RmsProp>; 2],
    pub updates: [u64; 2],
    pub ticks: u64,
    pub behaviour_rng: SimRng,
    pub sampling_rng: SimRng,
}
