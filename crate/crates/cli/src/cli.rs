//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use predprey_core::PolicyKind;

use crate::config::{self, AnalysisSettings, PolicyFractions, RunConfig};
use crate::report::analyze_file;
use crate::run::{default_out, run_mixed, run_simulate, run_train, RunCheckpoint, RunSummary};
use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "predprey", version, about = "Grid-world predator-prey ecosystem simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the configured policies without learning.
    Simulate(RunArgs),
    /// Train Q-networks for the learned species.
    Train(RunArgs),
    /// Mixed population of random, frozen and continually learning agents.
    Mixed(RunArgs),
    /// Classify the dynamics of population CSVs and write reports.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML configuration; a `preset = "..."` key starts from that preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset used when no config file is given, or as the base for
    /// one without a `preset` key.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ticks: Option<u64>,
    /// Output directory; defaults to runs/<command>-<hash prefix>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run checkpoint: trained networks for `simulate` and `mixed`, a run
    /// to resume for `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Prey act randomly; only predators use learned policies.
    #[arg(long)]
    pub only_predators_learned: bool,
    /// Bootstrap targets from the target network's own argmax.
    #[arg(long)]
    pub vanilla_max_target: bool,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Population CSV files.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Analysis settings are taken from this configuration's `[analysis]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Directory for reports; defaults to each CSV's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn base_config(config: Option<&Path>, preset: Option<&str>) -> Result<RunConfig, CliError> {
    match (config, preset) {
        (Some(path), p) => RunConfig::load(path, p),
        (None, Some(p)) => config::preset(p),
        (None, None) => Err(CliError::Config(format!("give --config or --preset (one of {})", config::PRESETS.join(", ")))),
    }
}

/// Applies command-line overrides and validates.
pub fn resolve(args: &RunArgs, base: RunConfig) -> Result<RunConfig, CliError> {
    let mut cfg = base;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.ticks {
        cfg.ticks = t;
    }
    if args.only_predators_learned {
        cfg.policy.prey = PolicyFractions::only(PolicyKind::Random);
    }
    if args.vanilla_max_target {
        cfg.train.vanilla_max_target = true;
    }
    cfg.validated()
}

fn write_config(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join("config.toml");
    fs::write(&path, cfg.to_toml()).map_err(|e| CliError::io(&path, e))
}

fn run_command(name: &'static str, args: &RunArgs) -> Result<RunSummary, CliError> {
    let resume = match (name, &args.checkpoint) {
        ("train", Some(path)) => Some(RunCheckpoint::load(path)?),
        _ => None,
    };
    let cfg = match &resume {
        Some(cp) => {
            if args.config.is_some() || args.preset.is_some() {
                warn!("resuming: configuration comes from the checkpoint");
            }
            resolve(args, cp.config.clone())?
        }
        None => resolve(args, base_config(args.config.as_deref(), args.preset.as_deref())?)?,
    };
    let out = args.out.clone().unwrap_or_else(|| default_out(name, &cfg.hash(name)));
    write_config(&out, &cfg)?;
    info!("{name}: seed={} ticks={} out={}", cfg.seed, cfg.ticks, out.display());
    let summary = match name {
        "simulate" => run_simulate(&cfg, &out, args.checkpoint.as_deref()),
        "train" => run_train(&cfg, &out, resume.as_ref()),
        _ => run_mixed(&cfg, &out, args.checkpoint.as_deref()),
    }?;
    info!(
        "done at tick {}: {} predators, {} prey, {} updates",
        summary.ticks, summary.final_population.n_predator, summary.final_population.n_prey, summary.updates
    );
    Ok(summary)
}

fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let settings = if args.config.is_some() || args.preset.is_some() {
        base_config(args.config.as_deref(), args.preset.as_deref())?.analysis
    } else {
        AnalysisSettings::default()
    };
    for f in &args.files {
        let (report, files) = analyze_file(f, &settings, args.out.as_deref())?;
        info!("{}: {} -> {}", f.display(), report.class, files.json.display());
    }
    Ok(())
}

/// Parses `argv` and runs the command. Argument errors are configuration
/// errors; `--help` and `--version` print and succeed.
pub fn run<I, T>(argv: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    match &cli.command {
        Command::Simulate(a) => run_command("simulate", a).map(drop),
        Command::Train(a) => run_command("train", a).map(drop),
        Command::Mixed(a) => run_command("mixed", a).map(drop),
        Command::Analyze(a) => analyze(a),
    }
}
