//! `hkws`: batch front end of the keyword-spotting toolkit.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training divergence.

mod commands;
mod config;
mod prepare;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hkws_core::dataset::SynthSpec;
use hkws_core::{DatasetManifest, Error};

use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hkws", version, about = "Hierarchical keyword spotting: prepare, group, train, evaluate")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Architecture preset for every model, overriding the configuration.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (the work directory; the corpus for `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Summarise a manifest and flag clips that are not 2 s, 16 kHz mono.
    Validate {
        /// Defaults to the configured manifest.
        manifest: Option<PathBuf>,
    },
    /// Split, augment the training side and extract features (cached).
    Prepare,
    /// Build the group map.
    Group {
        #[arg(value_enum)]
        kind: GroupKind,
    },
    /// Train one part of the system.
    Train {
        #[arg(value_enum)]
        what: TrainWhat,
    },
    /// Evaluate the trained models on the test side and write the report.
    Eval,
    /// Classify one WAV file.
    Infer { wav: PathBuf },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 12)]
        classes: usize,
        #[arg(long, default_value_t = 4)]
        groups: usize,
        #[arg(long, default_value_t = 40)]
        speakers: usize,
        #[arg(long = "per-class", default_value_t = 50)]
        per_class: usize,
        /// White-noise RMS amplitude.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    /// List the architecture presets.
    Presets,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrainWhat {
    Stage1,
    Stage2,
    Flat,
    Logreg,
}

/// An artifact an earlier command should have produced.
#[derive(Debug, thiserror::Error)]
#[error("missing {}: run `hkws {producer}` first", path.display())]
pub struct MissingArtifact {
    pub path: PathBuf,
    pub producer: &'static str,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    Ok(DatasetManifest::from_csv(&text)?)
}

fn run(cli: Cli) -> Result<String> {
    let o = Overrides { seed: cli.seed, preset: cli.preset, out: cli.out.clone() };
    if let Command::Synth { classes, groups, speakers, per_class, noise } = cli.command {
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::InvalidConfig(format!("noise level {noise} outside [0, 1]")).into());
        }
        let spec = SynthSpec {
            n_classes: classes,
            n_groups: groups,
            speakers,
            samples_per_class: per_class,
            seed: cli.seed.unwrap_or(SynthSpec::default().seed),
            noise_milli: (noise * 1000.0).round() as u32,
        };
        return commands::synth(&spec, cli.out.as_deref().unwrap_or(Path::new("corpus")));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &o)?;
    match cli.command {
        Command::Validate { manifest } => {
            let root = match &manifest {
                Some(m) => m.parent().map(Path::to_path_buf).unwrap_or_default(),
                None => cfg.paths.corpus_root.clone(),
            };
            commands::validate(manifest.as_deref().unwrap_or(cfg.manifest_path()), &root)
        }
        Command::Prepare => {
            let s = prepare::prepare(&cfg)?;
            Ok(format!(
                "train = {} ({} augmented)\ntest = {}\ncache_hits = {}\ncomputed = {}\n",
                s.train, s.augmented, s.test, s.cache_hits, s.computed
            ))
        }
        Command::Group { kind: GroupKind::Static } => commands::group_static(&cfg),
        Command::Group { kind: GroupKind::Dynamic } => commands::group_dynamic(&cfg),
        Command::Train { what: TrainWhat::Stage1 } => commands::train_stage1_cmd(&cfg),
        Command::Train { what: TrainWhat::Stage2 } => commands::train_stage2_cmd(&cfg),
        Command::Train { what: TrainWhat::Flat } => commands::train_flat_cmd(&cfg),
        Command::Train { what: TrainWhat::Logreg } => commands::train_logreg_cmd(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Infer { wav } => commands::infer(&cfg, &wav),
        Command::Presets => Ok(cfg
            .presets()?
            .iter()
            .map(|p| {
                let m = &p.model;
                format!("{}\tconv {:?} lstm {:?} dense {:?} dropout {}\t{}\n", p.name, m.conv_channels, m.lstm_units, m.dense_units, m.dropout, p.description)
            })
            .collect()),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Diverged { .. } => 3,
                Error::InvalidConfig(_) | Error::UnknownPreset(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
