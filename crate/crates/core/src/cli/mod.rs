//! The `slvm` command line. [`run`] parses arguments, resolves a
//! [`RunConfig`], writes it as `config.resolved` and dispatches.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error (including
//! unknown flags), 3 numeric fault.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{Baseline, DataConfig, EvalConfig, ProbeSection, ReportConfig, RunConfig, SampleConfig, RESOLVED_NAME};

use crate::audio::GeneratorConfig;
use crate::error::{Error, Result};
use crate::models::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "slvm", version, about = "Sequential latent variable models on raw waveforms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// lstm, wavenet, vrnn, srnn, stcn, cwvae, or a baseline (uniform, dmol).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub stack: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dz: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    TwoTimescale,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus and its manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Number of clips.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Train a model; writes metrics.csv and a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Bits per frame of a checkpoint or baseline on a corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate in subsegments of this many steps.
        #[arg(long)]
        segment_steps: Option<usize>,
    },
    /// LDA/KNN and CTC phoneme probes of every layer (and Mel features).
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate WAV files from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Merge eval tables with the FLAC reference rows.
    Report {
        #[command(flatten)]
        common: Common,
        inputs: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Synth { .. } => "synth",
            Self::Train { .. } => "train",
            Self::Eval { .. } => "eval",
            Self::Probe { .. } => "probe",
            Self::Sample { .. } => "sample",
            Self::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Self::Synth { common, .. }
            | Self::Train { common, .. }
            | Self::Eval { common, .. }
            | Self::Probe { common, .. }
            | Self::Sample { common, .. }
            | Self::Report { common, .. } => common,
        }
    }
}

fn apply_common(cfg: &mut RunConfig, c: &Common) -> Result<()> {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(m) = &c.model {
        match m.to_ascii_lowercase().as_str() {
            "uniform" => cfg.eval.baseline = Some(Baseline::Uniform),
            "dmol" => cfg.eval.baseline = Some(Baseline::Dmol),
            other => {
                let kind: ModelKind = other.parse()?;
                if kind != cfg.model.kind {
                    // switch to that model's desk defaults, keeping the stack
                    let keep = (cfg.model.stack, cfg.model.bit_depth);
                    cfg.model = crate::models::ModelConfig::desk(kind, keep.0);
                    cfg.model.bit_depth = keep.1;
                }
            }
        }
    }
    if let Some(v) = c.stack {
        cfg.model.stack = v;
    }
    if let Some(v) = c.stride {
        cfg.model.stride = v;
    }
    if let Some(v) = c.layers {
        cfg.model.layers = v;
    }
    if let Some(v) = c.dz {
        cfg.model.dz = v;
    }
    Ok(())
}

/// Builds the run configuration for a parsed command line.
pub fn resolve(cmd: &Command) -> Result<RunConfig> {
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.command = cmd.name().to_string();
    apply_common(&mut cfg, common)?;
    match cmd {
        Command::Synth { n, preset, .. } => {
            if *preset == Some(Preset::TwoTimescale) {
                cfg.synth = GeneratorConfig::two_timescale();
            } else if *preset == Some(Preset::Default) {
                cfg.synth = GeneratorConfig::default();
            }
            if let Some(n) = n {
                cfg.synth.count = *n;
            }
        }
        Command::Train { data, val, steps, .. } => {
            if data.is_some() {
                cfg.data.train = data.clone();
            }
            if val.is_some() {
                cfg.data.val = val.clone();
            }
            if let Some(s) = steps {
                cfg.train.max_steps = *s;
            }
        }
        Command::Eval {
            data,
            checkpoint,
            segment_steps,
            ..
        } => {
            if data.is_some() {
                cfg.data.test = data.clone();
            }
            if checkpoint.is_some() {
                cfg.eval.checkpoint = checkpoint.clone();
                cfg.eval.baseline = None;
            }
            if segment_steps.is_some() {
                cfg.eval.segment_steps = *segment_steps;
            }
        }
        Command::Probe { data, checkpoint, .. } => {
            if data.is_some() {
                cfg.data.train = data.clone();
            }
            if checkpoint.is_some() {
                cfg.probe.checkpoint = checkpoint.clone();
            }
        }
        Command::Sample { checkpoint, n, frames, .. } => {
            if checkpoint.is_some() {
                cfg.sample.checkpoint = checkpoint.clone();
            }
            if let Some(n) = n {
                cfg.sample.count = *n;
            }
            if let Some(f) = frames {
                cfg.sample.frames = *f;
            }
        }
        Command::Report { inputs, .. } => {
            if !inputs.is_empty() {
                cfg.report.inputs = inputs.clone();
            }
        }
    }
    cfg.resolve();
    Ok(cfg)
}

/// Runs a resolved configuration. Commands that read a checkpoint adopt its
/// model section, so `config.resolved` is written after dispatch.
pub fn execute(mut cfg: RunConfig) -> Result<RunConfig> {
    match cfg.command.as_str() {
        "synth" => commands::synth(&cfg)?,
        "train" => commands::train_cmd(&cfg)?,
        "eval" => commands::eval_cmd(&mut cfg)?,
        "probe" => commands::probe_cmd(&mut cfg)?,
        "sample" => commands::sample_cmd(&mut cfg)?,
        "report" => print!("{}", commands::report_cmd(&cfg)?),
        other => return Err(Error::Config(format!("unknown command `{other}`"))),
    }
    cfg.write_resolved()?;
    Ok(cfg)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Numeric { .. } => 3,
        _ => 1,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match resolve(&cli.command).and_then(execute) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests;
