//! The `simulate`, `train` and `mixed` pipelines and their artifacts.
//!
//! Each run writes into its output directory:
//!
//! * `population.csv`: one row per tick,
//! * `training.csv`: one row per optimiser update (`train`, `mixed`),
//! * `types.csv`: agents per species and policy type, initially (tick 0)
//!   and after every tick (`mixed`),
//! * `checkpoint.json` (plus `checkpoint-<tick>.json` every
//!   `checkpoint_period` ticks) and `summary.json`.
//!
//! Every artifact carries the config hash and the seed; the only source of
//! randomness is the run seed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use predprey_core::learning::{Trainer, TrainerCheckpoint};
use predprey_core::policy::{Brains, Exploration, NetworkCheckpoint, PolicyKind, QNetworkParams};
use predprey_core::rng::{stream, Stream};
use predprey_core::world::{init_world, PopulationRecord, Scenario, Species, World, WorldCheckpoint};
use predprey_core::commit_real_step;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::telemetry::{self, CsvSink};
use crate::CliError;

pub const RUN_SCHEMA: &str = "predprey.run/1";
pub const SUMMARY_SCHEMA: &str = "predprey.summary/1";

/// Everything needed to continue a run, plus the networks it acted with.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub schema: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub world: WorldCheckpoint,
    pub trainer: Option<TrainerCheckpoint>,
    /// Networks of each species as of this checkpoint (the live ones while
    /// training); `simulate` and `mixed` load learned policies from here.
    pub networks: [Option<NetworkCheckpoint>; 2],
    /// Optimiser updates written to `training.csv` so far.
    pub updates_logged: u64,
}

impl RunCheckpoint {
    pub fn load(path: &Path) -> Result<RunCheckpoint, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let cp: RunCheckpoint = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Config(format!("{} is not a run checkpoint: {e}", path.display())))?;
        if cp.schema != RUN_SCHEMA {
            return Err(CliError::Config(format!("unsupported checkpoint schema `{}`", cp.schema)));
        }
        Ok(cp)
    }

    pub fn networks(&self) -> Result<[Option<QNetworkParams>; 2], CliError> {
        let load = |c: &Option<NetworkCheckpoint>| {
            c.as_ref().map(QNetworkParams::from_checkpoint).transpose().map_err(|e| CliError::Config(e.to_string()))
        };
        Ok([load(&self.networks[0])?, load(&self.networks[1])?])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeExtinction {
    pub tick: u64,
    pub species: Species,
    pub policy: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub ticks: u64,
    pub updates: u64,
    pub final_population: PopulationRecord,
    /// First tick at which each species (predator, prey) had no members.
    pub extinct_at: [Option<u64>; 2],
    pub type_extinctions: Vec<TypeExtinction>,
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(runtime)?;
    bytes.push(b'\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, &bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Opens `name` in `out` for appending after a resume: an existing file from
/// the same run (same first line) keeps its rows up to `keep_upto` in the
/// first column; anything else is replaced by a fresh file.
fn open_sink(out: &Path, name: &str, meta: &str, header: &[&str], period: u64, keep_upto: Option<u64>) -> Result<CsvSink, CliError> {
    let path = out.join(name);
    if let (Some(limit), Ok(text)) = (keep_upto, fs::read_to_string(&path)) {
        if text.lines().next() == Some(format!("# {meta}").as_str()) {
            let kept: Vec<&str> = text
                .lines()
                .enumerate()
                .filter(|(k, l)| *k < 2 || l.split(',').next().and_then(|v| v.parse::<u64>().ok()).is_some_and(|v| v <= limit))
                .map(|(_, l)| l)
                .collect();
            let mut f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            for l in kept {
                writeln!(f, "{l}").map_err(|e| CliError::io(&path, e))?;
            }
            drop(f);
            return CsvSink::append(&path, period);
        }
    }
    CsvSink::create(&path, meta, header, period)
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn type_counts(world: &World) -> [[usize; 4]; 2] {
    let mut c = [[0; 4]; 2];
    for a in world.agents() {
        let k = match a.policy {
            PolicyKind::Random => 0,
            PolicyKind::ScriptedChase | PolicyKind::ScriptedFlee => 1,
            PolicyKind::Learned { frozen: true } => 2,
            PolicyKind::Learned { frozen: false } => 3,
        };
        c[a.species.index()][k] += 1;
    }
    c
}

const TYPE_NAMES: [&str; 4] = ["random", "scripted", "frozen", "continual"];

/// Per-tick bookkeeping shared by all pipelines.
struct Recorder {
    population: CsvSink,
    training: Option<CsvSink>,
    types: Option<CsvSink>,
    last_types: [[usize; 4]; 2],
    extinct_at: [Option<u64>; 2],
    type_extinctions: Vec<TypeExtinction>,
    updates_logged: u64,
    nonfinite_streak: u32,
}

impl Recorder {
    fn tick(&mut self, world: &World) -> Result<(), CliError> {
        let rec = world.snapshot();
        self.population.row(&telemetry::population_fields(&rec)).map_err(runtime)?;
        for (s, n) in [rec.n_predator, rec.n_prey].into_iter().enumerate() {
            if n == 0 && self.extinct_at[s].is_none() {
                self.extinct_at[s] = Some(rec.tick);
                warn!("species extinct: tick={} species={}", rec.tick, Species::ALL[s].name());
            }
        }
        if let Some(sink) = self.types.as_mut() {
            let counts = type_counts(world);
            for s in Species::ALL {
                for k in 0..4 {
                    if self.last_types[s.index()][k] > 0 && counts[s.index()][k] == 0 {
                        info!("type extinct: tick={} species={} type={}", rec.tick, s.name(), TYPE_NAMES[k]);
                        self.type_extinctions.push(TypeExtinction { tick: rec.tick, species: s, policy: TYPE_NAMES[k].into() });
                    }
                }
            }
            let mut fields = vec![rec.tick.to_string()];
            fields.extend(counts.iter().flatten().map(|c| c.to_string()));
            sink.row(&fields).map_err(runtime)?;
            self.last_types = counts;
        }
        Ok(())
    }

    fn train(&mut self, report: &predprey_core::learning::TrainReport, epsilon: f64, max_streak: u32) -> Result<(), CliError> {
        for b in &report.batches {
            if b.skipped {
                self.nonfinite_streak += 1;
                if self.nonfinite_streak > max_streak {
                    return Err(CliError::Runtime(format!(
                        "aborting: {} consecutive updates with non-finite loss or gradient",
                        self.nonfinite_streak
                    )));
                }
                continue;
            }
            self.nonfinite_streak = 0;
            if let Some(sink) = self.training.as_mut() {
                let fields = [self.updates_logged.to_string(), b.loss.to_string(), epsilon.to_string(), report.buffer_size.to_string()];
                sink.row(&fields).map_err(runtime)?;
            }
            self.updates_logged += 1;
        }
        Ok(())
    }

    fn finish(self) -> Result<(), CliError> {
        self.population.finish().map_err(runtime)?;
        for s in [self.training, self.types].into_iter().flatten() {
            s.finish().map_err(runtime)?;
        }
        Ok(())
    }
}

struct Artifacts<'a> {
    out: &'a Path,
    command: &'static str,
    cfg: &'a RunConfig,
    hash: String,
}

impl Artifacts<'_> {
    fn recorder(&self, training: bool, types: bool, resume: Option<(u64, u64)>) -> Result<Recorder, CliError> {
        let meta = telemetry::meta_line(&self.hash, self.cfg.seed);
        let period = self.cfg.telemetry_period;
        let (tick, updates) = resume.map_or((None, None), |(t, u)| (Some(t), Some(u)));
        // Update rows are indexed from zero, so `updates` rows survive.
        let kept_updates = updates.map(|u| u.wrapping_sub(1));
        let population = open_sink(self.out, "population.csv", &meta, &telemetry::POPULATION_HEADER, period, tick)?;
        let training = if training {
            let keep = if updates == Some(0) { None } else { kept_updates };
            Some(open_sink(self.out, "training.csv", &meta, &telemetry::TRAINING_HEADER, period, keep)?)
        } else {
            None
        };
        let types = if types {
            Some(open_sink(self.out, "types.csv", &meta, &telemetry::TYPES_HEADER, period, tick)?)
        } else {
            None
        };
        Ok(Recorder {
            population,
            training,
            types,
            last_types: [[0; 4]; 2],
            extinct_at: [None, None],
            type_extinctions: Vec::new(),
            updates_logged: updates.unwrap_or(0),
            nonfinite_streak: 0,
        })
    }

    fn checkpoint(&self, name: &str, world: &World, trainer: Option<&Trainer>, networks: [Option<NetworkCheckpoint>; 2], updates_logged: u64) -> Result<(), CliError> {
        let cp = RunCheckpoint {
            schema: RUN_SCHEMA.into(),
            command: self.command.into(),
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            world: world.to_checkpoint(),
            trainer: trainer.map(Trainer::to_checkpoint),
            networks,
            updates_logged,
        };
        write_json(&self.out.join(name), &cp)
    }

    fn summary(&self, world: &World, rec: Recorder, updates: u64) -> Result<RunSummary, CliError> {
        let summary = RunSummary {
            schema: SUMMARY_SCHEMA.into(),
            command: self.command.into(),
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            scenario: self.cfg.scenario,
            ticks: world.tick(),
            updates,
            final_population: world.snapshot(),
            extinct_at: rec.extinct_at,
            type_extinctions: rec.type_extinctions.clone(),
        };
        rec.finish()?;
        write_json(&self.out.join("summary.json"), &summary)?;
        Ok(summary)
    }
}

fn periodic(cfg: &RunConfig, tick: u64) -> Option<String> {
    (cfg.checkpoint_period > 0 && tick % cfg.checkpoint_period == 0 && tick < cfg.ticks).then(|| format!("checkpoint-{tick}.json"))
}

fn networks_of(nets: &[Option<QNetworkParams>; 2]) -> [Option<NetworkCheckpoint>; 2] {
    [nets[0].as_ref().map(|n| n.to_checkpoint()), nets[1].as_ref().map(|n| n.to_checkpoint())]
}

/// Networks for every species that has learned agents, loaded from a run
/// checkpoint.
fn required_networks(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<[Option<QNetworkParams>; 2], CliError> {
    if !cfg.needs_networks() {
        return Ok([None, None]);
    }
    let Some(path) = checkpoint else {
        return Err(CliError::Config("learned policies need --checkpoint with trained networks".into()));
    };
    let nets = RunCheckpoint::load(path)?.networks()?;
    for s in Species::ALL {
        if cfg.policy.of(s).learned() {
            match &nets[s.index()] {
                None => return Err(CliError::Config(format!("checkpoint has no {} network", s.name()))),
                Some(n) if *n.config() != cfg.network => {
                    return Err(CliError::Config(format!("{} network shape differs from the configuration", s.name())))
                }
                Some(_) => {}
            }
        }
    }
    Ok(nets)
}

fn new_world(cfg: &RunConfig) -> Result<World, CliError> {
    init_world(cfg.world.clone(), cfg.repro.clone(), cfg.scenario, &cfg.populate()).map_err(|e| CliError::Config(e.to_string()))
}

/// Runs the configured policies without learning. Learned agents act
/// greedily (up to `train.frozen_epsilon`) with networks from `checkpoint`.
pub fn run_simulate(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<RunSummary, CliError> {
    let nets = required_networks(cfg, checkpoint)?;
    prepare_out(out)?;
    let art = Artifacts { out, command: "simulate", cfg, hash: cfg.hash("simulate") };
    let mut world = new_world(cfg)?;
    let mut rec = art.recorder(false, false, None)?;
    let mut rng = stream(cfg.seed, Stream::Behaviour);
    let brains = Brains { live: [nets[0].as_ref(), nets[1].as_ref()], frozen: [nets[0].as_ref(), nets[1].as_ref()] };
    let eps = cfg.train.frozen_epsilon;
    while world.tick() < cfg.ticks {
        commit_real_step(&mut world, &brains, Exploration { continual: eps, frozen: eps }, &mut rng).map_err(runtime)?;
        rec.tick(&world)?;
        if let Some(name) = periodic(cfg, world.tick()) {
            art.checkpoint(&name, &world, None, networks_of(&nets), 0)?;
        }
    }
    art.checkpoint("checkpoint.json", &world, None, networks_of(&nets), 0)?;
    art.summary(&world, rec, 0)
}

fn learners_done(trainer: &Trainer, max_updates: Option<u64>) -> bool {
    max_updates.is_some_and(|m| trainer.learners.iter().flatten().all(|l| l.updates >= m))
}

fn trainer_networks(trainer: &Trainer) -> [Option<NetworkCheckpoint>; 2] {
    let live = |s: usize| trainer.learners[s].as_ref().map(|l| l.online.to_checkpoint());
    let frozen = |s: usize| trainer.frozen[s].as_ref().map(|n| n.to_checkpoint());
    [live(0).or_else(|| frozen(0)), live(1).or_else(|| frozen(1))]
}

fn training_loop(art: &Artifacts<'_>, mut world: World, mut trainer: Trainer, mut rec: Recorder) -> Result<RunSummary, CliError> {
    let cfg = art.cfg;
    while world.tick() < cfg.ticks && !learners_done(&trainer, cfg.max_updates) {
        let report = trainer.tick(&mut world).map_err(runtime)?;
        rec.tick(&world)?;
        if let Some(t) = &report.train {
            rec.train(t, report.epsilon, cfg.max_nonfinite_streak)?;
        }
        if let Some(name) = periodic(cfg, world.tick()) {
            art.checkpoint(&name, &world, Some(&trainer), trainer_networks(&trainer), rec.updates_logged)?;
        }
    }
    art.checkpoint("checkpoint.json", &world, Some(&trainer), trainer_networks(&trainer), rec.updates_logged)?;
    let updates = trainer.updates();
    art.summary(&world, rec, updates)
}

/// Trains fresh networks for every species with learned agents, or resumes
/// from a checkpoint written by an earlier `train` run, in which case rows
/// of the earlier run's CSVs past the checkpoint are dropped and the run
/// continues appending.
pub fn run_train(cfg: &RunConfig, out: &Path, resume: Option<&RunCheckpoint>) -> Result<RunSummary, CliError> {
    if !(cfg.policy.predator.continual > 0.0 || cfg.policy.prey.continual > 0.0) {
        return Err(CliError::Config("training needs continual learners in at least one species".into()));
    }
    prepare_out(out)?;
    let art = Artifacts { out, command: "train", cfg, hash: cfg.hash("train") };
    let (world, trainer, rec) = match resume {
        Some(cp) => {
            let Some(t) = &cp.trainer else {
                return Err(CliError::Config("checkpoint holds no training state".into()));
            };
            let world = World::from_checkpoint(cp.world.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            let trainer = Trainer::from_checkpoint(t).map_err(|e| CliError::Config(e.to_string()))?;
            let rec = art.recorder(true, false, Some((world.tick(), cp.updates_logged)))?;
            (world, trainer, rec)
        }
        None => {
            let nets = Species::ALL.map(|s| cfg.policy.of(s).learned().then(|| cfg.network.clone()));
            let trainer = Trainer::new(cfg.train.clone(), nets, cfg.seed);
            (new_world(cfg)?, trainer, art.recorder(true, false, None)?)
        }
    };
    training_loop(&art, world, trainer, rec)
}

/// A population mixing random, frozen and continually learning agents;
/// logs the count of every policy type per tick and the ticks at which a
/// type dies out.
pub fn run_mixed(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<RunSummary, CliError> {
    let nets = required_networks(cfg, checkpoint)?;
    prepare_out(out)?;
    let art = Artifacts { out, command: "mixed", cfg, hash: cfg.hash("mixed") };
    let world = new_world(cfg)?;
    let live = Species::ALL.map(|s| if cfg.policy.of(s).continual > 0.0 { nets[s.index()].clone() } else { None });
    let mut trainer = Trainer::from_params(cfg.train.clone(), live, cfg.seed);
    trainer.frozen = nets;
    let mut rec = art.recorder(true, true, None)?;
    rec.last_types = type_counts(&world);
    if let Some(sink) = rec.types.as_mut() {
        let mut fields = vec!["0".to_owned()];
        fields.extend(rec.last_types.iter().flatten().map(|c| c.to_string()));
        sink.row(&fields).map_err(runtime)?;
    }
    training_loop(&art, world, trainer, rec)
}

/// Output directory for a command when `--out` is not given.
pub fn default_out(command: &str, hash: &str) -> PathBuf {
    PathBuf::from("runs").join(format!("{command}-{}", &hash[..12]))
}

/// Counts per species and policy type, keyed by label.
pub fn policy_census(world: &World) -> BTreeMap<(Species, &'static str), usize> {
    let mut m = BTreeMap::new();
    for a in world.agents() {
        *m.entry((a.species, a.policy.label())).or_insert(0) += 1;
    }
    m
}
