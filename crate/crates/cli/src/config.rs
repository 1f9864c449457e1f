//! Run configuration: a TOML document with one section per component, named
//! presets, overrides from the command line and the config hash embedded in
//! every artifact.

use std::path::Path;

use predprey_core::analysis::Thresholds;
use predprey_core::policy::{NetworkConfig, PolicyKind, PolicyMix};
use predprey_core::world::Populate;
use predprey_core::{ReproConfig, Scenario, Species, TrainConfig, WorldConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Fractions of each policy kind within one species, at initialisation and
/// for ratio births. `scripted` means chase for predators and flee for
/// preys.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyFractions {
    pub random: f64,
    pub scripted: f64,
    pub frozen: f64,
    pub continual: f64,
}

impl PolicyFractions {
    pub fn only(kind: PolicyKind) -> Self {
        let mut f = PolicyFractions::default();
        match kind {
            PolicyKind::Random => f.random = 1.0,
            PolicyKind::ScriptedChase | PolicyKind::ScriptedFlee => f.scripted = 1.0,
            PolicyKind::Learned { frozen: true } => f.frozen = 1.0,
            PolicyKind::Learned { frozen: false } => f.continual = 1.0,
        }
        f
    }

    pub fn mix(&self, species: Species) -> PolicyMix {
        let kinds = [
            (PolicyKind::Random, self.random),
            (PolicyKind::scripted_for(species), self.scripted),
            (PolicyKind::Learned { frozen: true }, self.frozen),
            (PolicyKind::Learned { frozen: false }, self.continual),
        ];
        PolicyMix { entries: kinds.into_iter().filter(|k| k.1 > 0.0).collect() }
    }

    pub fn learned(&self) -> bool {
        self.frozen > 0.0 || self.continual > 0.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policies {
    pub predator: PolicyFractions,
    pub prey: PolicyFractions,
}

impl Policies {
    pub fn of(&self, species: Species) -> &PolicyFractions {
        match species {
            Species::Predator => &self.predator,
            Species::Prey => &self.prey,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSettings {
    /// Leading fraction of a series dropped as transient before analysis.
    pub burn_in: f64,
    /// Samples per block in the trait trend test.
    pub trend_window: usize,
    /// `max_lag = 0` uses a quarter of the analysed series.
    pub thresholds: Thresholds,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings { burn_in: 0.1, trend_window: 1000, thresholds: Thresholds { max_lag: 0, ..Thresholds::default() } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Overrides `world.seed`; every random stream derives from it.
    pub seed: u64,
    pub ticks: u64,
    /// Training stops early once every learner has made this many updates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_updates: Option<u64>,
    /// Telemetry rows are flushed to disk every this many ticks.
    pub telemetry_period: u64,
    /// Ticks between intermediate checkpoints; 0 writes only the final one.
    #[serde(default)]
    pub checkpoint_period: u64,
    /// Consecutive skipped (non-finite) updates that abort training.
    #[serde(default = "default_streak")]
    pub max_nonfinite_streak: u32,
    pub n_predator: usize,
    pub n_prey: usize,
    pub world: WorldConfig,
    pub repro: ReproConfig,
    pub train: TrainConfig,
    pub network: NetworkConfig,
    pub policy: Policies,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

fn default_streak() -> u32 {
    100
}

pub const PRESETS: [&str; 7] = ["env1", "env2", "env3", "env1-small", "env2-small", "env3-small", "smoke"];

fn learned_both() -> Policies {
    let l = PolicyFractions::only(PolicyKind::Learned { frozen: false });
    Policies { predator: l.clone(), prey: l }
}

fn scripted_both() -> Policies {
    let s = PolicyFractions::only(PolicyKind::ScriptedChase);
    Policies { predator: s.clone(), prey: s }
}

fn full_scale(scenario: Scenario) -> RunConfig {
    let channels = if scenario == Scenario::Env3 { 7 } else { 4 };
    let world = WorldConfig {
        width: 600,
        height: 600,
        predation_scope: 5,
        max_population: 10_000,
        channels,
        ..WorldConfig::default()
    };
    let repro = ReproConfig {
        p_predator: 3e-3,
        p_prey: 6e-3,
        mating_scope: 15,
        mutation_prob: 1e-3,
        ..ReproConfig::default()
    };
    let train = TrainConfig { gamma: 0.99, learning_rate: 1e-4, ..TrainConfig::default() };
    let network = NetworkConfig { channels: channels as usize, id_dim: world.id_dim as usize, ..NetworkConfig::default() };
    RunConfig {
        scenario,
        seed: 0,
        ticks: 200_000,
        max_updates: None,
        telemetry_period: 1000,
        checkpoint_period: 10_000,
        max_nonfinite_streak: default_streak(),
        n_predator: 1000,
        n_prey: 1000,
        world,
        repro,
        train,
        network,
        policy: learned_both(),
        analysis: AnalysisSettings::default(),
    }
}

/// 100 by 100 cells and 100 agents per species with scripted policies.
/// Predators pay more per move and both species breed faster than at full
/// scale, so that a few hundred agents still show coupled oscillations.
fn small(scenario: Scenario) -> RunConfig {
    let mut c = full_scale(scenario);
    c.world.width = 100;
    c.world.height = 100;
    c.world.move_cost = 0.05;
    c.world.max_population = 3000;
    c.n_predator = 100;
    c.n_prey = 100;
    c.repro.p_predator = 0.03;
    c.repro.p_prey = 0.05;
    c.policy = scripted_both();
    c.checkpoint_period = 0;
    c.ticks = match scenario {
        Scenario::Env1 => 20_000,
        _ => 50_000,
    };
    if scenario == Scenario::Env2 {
        c.repro.mate_prob_predator = 0.06;
        c.repro.mate_prob_prey = 0.03;
    }
    c
}

/// 20 by 20 cells, 10 agents per species, both learning. Predators starve
/// within five ticks and kill only at adjacent cells while prey breed fast,
/// so prey live long enough to learn from their deaths.
fn smoke() -> RunConfig {
    let mut c = full_scale(Scenario::Env1);
    c.world.width = 20;
    c.world.height = 20;
    c.world.id_dim = 8;
    c.world.max_population = 200;
    c.world.move_cost = 0.2;
    c.world.predation_scope = 3;
    c.repro.p_prey = 0.2;
    c.n_predator = 10;
    c.n_prey = 10;
    c.ticks = 5000;
    c.max_updates = Some(2000);
    c.telemetry_period = 100;
    c.checkpoint_period = 0;
    c.train = TrainConfig {
        learning_rate: 1e-3,
        anneal_steps: 1000,
        target_net_period: 100,
        epsilon_end: 0.1,
        ..c.train
    };
    c.network = NetworkConfig { channels: 4, obs_side: 11, conv1: 8, conv2: 16, hidden: 32, id_dim: 8, id_embed: 8, post: 32 };
    c
}

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    Ok(match name {
        "env1" => full_scale(Scenario::Env1),
        "env2" => full_scale(Scenario::Env2),
        "env3" => full_scale(Scenario::Env3),
        "env1-small" => small(Scenario::Env1),
        "env2-small" => small(Scenario::Env2),
        "env3-small" => small(Scenario::Env3),
        "smoke" => smoke(),
        other => return Err(CliError::Config(format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")))),
    })
}

/// Tables of `over` replace matching keys of `base` recursively.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses a configuration document. A `preset = "<name>"` key makes the
    /// remaining keys overrides of that preset; `fallback` plays the same
    /// role when the document names none. Without either the document must
    /// be complete.
    pub fn parse(text: &str, fallback: Option<&str>) -> Result<RunConfig, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        let named = match doc.remove("preset") {
            Some(toml::Value::String(s)) => Some(s),
            Some(_) => return Err(CliError::Config("`preset` must be a string".into())),
            None => fallback.map(str::to_owned),
        };
        let table = match named {
            Some(name) => {
                let mut base = toml::Table::try_from(preset(&name)?).map_err(|e| CliError::Config(e.to_string()))?;
                // A species' policy fractions are replaced as a whole.
                if let (Some(toml::Value::Table(b)), Some(toml::Value::Table(o))) = (base.get_mut("policy"), doc.get("policy")) {
                    for k in o.keys() {
                        b.remove(k);
                    }
                }
                merge(&mut base, doc);
                base
            }
            None => doc,
        };
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validated()
    }

    pub fn load(path: &Path, fallback: Option<&str>) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text, fallback)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }

    /// Copies the run seed into the world and checks cross-section
    /// consistency.
    pub fn validated(mut self) -> Result<RunConfig, CliError> {
        self.world.seed = self.seed;
        let bad = |m: String| Err(CliError::Config(m));
        self.world.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.repro.validate().map_err(|e| CliError::Config(e.into()))?;
        self.train.validate().map_err(|e| CliError::Config(e.into()))?;
        self.network.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.network.channels != self.world.channels as usize
            || self.network.id_dim != self.world.id_dim as usize
            || self.network.obs_side != self.world.obs_side()
        {
            return bad("network channels, id_dim and obs_side must match the world".into());
        }
        if self.scenario == Scenario::Env3 && self.world.channels != 7 {
            return bad("env3 observes traits and needs 7 channels".into());
        }
        for s in Species::ALL {
            self.policy.of(s).mix(s).validate().map_err(|e| CliError::Config(format!("policy.{}: {e}", s.name())))?;
        }
        if self.telemetry_period == 0 {
            return bad("telemetry_period must be positive".into());
        }
        let a = &self.analysis;
        if !(0.0..1.0).contains(&a.burn_in) || a.trend_window == 0 {
            return bad("analysis.burn_in must lie in [0, 1) and trend_window be positive".into());
        }
        Ok(self)
    }

    pub fn populate(&self) -> Populate {
        Populate {
            n_predator: self.n_predator,
            n_prey: self.n_prey,
            predator_policy: self.policy.predator.mix(Species::Predator),
            prey_policy: self.policy.prey.mix(Species::Prey),
        }
    }

    pub fn needs_networks(&self) -> bool {
        self.policy.predator.learned() || self.policy.prey.learned()
    }

    /// SHA-256 of the command name and the canonical TOML form.
    pub fn hash(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\n");
        h.update(self.to_toml().as_bytes());
        hex::encode(h.finalize())
    }
}
