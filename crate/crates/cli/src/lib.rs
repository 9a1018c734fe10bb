//! Configuration-driven batch runner for the dipecho scenarios.

pub mod config;
pub mod output;
pub mod scenarios;

use clap::{Parser, Subcommand};
use config::{Layers, RunConfig, Scenario, StageSeeds};
use dipecho::nvham::CrystalOrientation;
use dipecho::verify::Level;
use output::OutputDigest;
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "dipecho", version, about = "Dipolar spin-ensemble echo simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a scenario and write its artifacts and manifest.
    Run(RunArgs),
    /// List the shipped presets.
    Presets,
}

#[derive(clap::Args, Debug)]
pub struct RunArgs {
    pub scenario: Scenario,
    /// TOML config file, applied over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Master seed; derives the geometry and trajectory seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "DIPECHO_THREADS")]
    pub threads: Option<usize>,
    /// Defaults to runs/<scenario>.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Dotted key=value applied last, e.g. system.geometry.n_spins=60.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, value_parser = parse_orientation)]
    pub orientation: Option<CrystalOrientation>,
    /// Verification level for `verify`.
    #[arg(long, value_parser = parse_level)]
    pub level: Option<Level>,
}

fn parse_orientation(s: &str) -> Result<CrystalOrientation, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| "expected native, engineered or 111".to_string())
}

fn parse_level(s: &str) -> Result<Level, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| "expected fast or full".to_string())
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Capacity(String),
    Verification(String),
    Other(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Capacity(_) => EXIT_CAPACITY,
            Failure::Verification(_) => EXIT_VERIFY,
            Failure::Other(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Capacity(m) | Failure::Verification(m) | Failure::Other(m) => m,
        }
    }
}

impl From<dipecho::Error> for Failure {
    fn from(e: dipecho::Error) -> Self {
        match e {
            dipecho::Error::TooLarge { .. } => Failure::Capacity(e.to_string()),
            dipecho::Error::Io(_) => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub scenario: Scenario,
    pub preset: Option<String>,
    /// sha256 of `effective_config.toml`.
    pub config_sha256: String,
    pub master_seed: Option<u64>,
    pub stage_seeds: StageSeeds,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputDigest>,
}

pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub headline: String,
}

pub fn run(args: &RunArgs) -> Result<RunReport, Failure> {
    let start = Instant::now();
    let layers = Layers {
        preset: args.preset.as_deref(),
        config: args.config.as_deref(),
        overrides: &args.overrides,
        seed: args.seed,
        orientation: args.orientation,
    };
    let mut cfg: RunConfig = config::load(&layers).map_err(Failure::Config)?;
    if let Some(s) = cfg.scenario {
        if s != args.scenario {
            return Err(Failure::Config(format!("config is for scenario `{s}`, not `{}`", args.scenario)));
        }
    }
    cfg.scenario = Some(args.scenario);
    if let Some(l) = args.level {
        cfg.verify.level = l;
    }
    let effective = cfg.to_toml().map_err(Failure::Config)?;
    // The effective config must describe this run exactly.
    let reparsed: RunConfig = toml::from_str(&effective).map_err(|e| Failure::Other(format!("effective config does not parse back: {e}")))?;
    if reparsed != cfg {
        return Err(Failure::Other("effective config does not round-trip".into()));
    }
    if args.scenario != Scenario::AngularMap && args.scenario != Scenario::Verify {
        cfg.system.validate()?;
    }

    let threads = match args.threads {
        Some(0) => return Err(Failure::Config("--threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Failure::Other(e.to_string()))?;
    log::info!("running {} on {threads} threads, seeds {:?}", args.scenario, cfg.stage_seeds());
    let outcome = pool.install(|| scenarios::run(args.scenario, &cfg))?;

    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs").join(args.scenario.to_string()));
    let mut artifacts = outcome.artifacts;
    artifacts.text("effective_config.toml", effective.clone());
    let outputs = output::write_all(&out_dir, &artifacts).map_err(|e| Failure::Other(format!("{}: {e}", out_dir.display())))?;
    let manifest = Manifest {
        tool: "dipecho",
        version: env!("CARGO_PKG_VERSION"),
        scenario: args.scenario,
        preset: args.preset.clone(),
        config_sha256: output::sha256(effective.as_bytes()),
        master_seed: cfg.seed,
        stage_seeds: cfg.stage_seeds(),
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Other(e.to_string()))? + "\n";
    log::info!("finished in {:.3} s", manifest.wall_time_s);
    std::fs::write(out_dir.join("manifest.json"), text).map_err(|e| Failure::Other(e.to_string()))?;
    if !outcome.passed {
        return Err(Failure::Verification(format!("verification failed: {}", outcome.headline)));
    }
    Ok(RunReport { out_dir, manifest, headline: outcome.headline })
}
