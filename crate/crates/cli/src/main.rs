//! `gaitcorr`: batch driver for reconstruction, training and evaluation.
//!
//! Exit codes: 0 success, 1 validation error (bad flag, config or file
//! contents), 2 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use gaitcorr::Execution;

use commands::{CliError, Context, InputKind};
use config::{apply_config_text, ConfigFlags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "gaitcorr", version, about = "Gait kinematics from skeleton tracking, with learned correction")]
struct Cli {
    /// Flat `key = value` config file. Keys match the long flags with `_`
    /// for `-`; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Ignore the config file and use the reference preset: 30/120 Hz,
    /// 4 Hz filter, W=3, 60/20/20 split, 1000 epochs, 20% hold-out.
    #[arg(long, global = true)]
    paper_defaults: bool,

    /// Worker threads (1 runs everything sequentially).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Timestamp written into outputs instead of the current time, so
    /// repeated runs are byte-identical.
    #[arg(long, global = true, value_name = "UNIX_SECONDS")]
    fixed_epoch: Option<u64>,

    #[command(flatten)]
    options: ConfigFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate paired synthetic recordings (exact mocap, corrupted camera) and a manifest.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Synchronise each manifest pair, filter the camera and resample mocap onto camera time.
    Preprocess {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Joint-angle signals of one recording.
    Angles {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "camera")]
        kind: InputKind,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also dump the segment frames of every sample.
        #[arg(long, value_name = "FILE")]
        frames: Option<PathBuf>,
    },
    /// Heel strikes and toe-offs of one recording (`side,kind,t`).
    Events {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "camera")]
        kind: InputKind,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Gait descriptors of one recording.
    Descriptors {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "camera")]
        kind: InputKind,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Defaults to the input file stem.
        #[arg(long)]
        participant: Option<String>,
        /// Defaults to the input file stem.
        #[arg(long)]
        trial: Option<String>,
        /// One row per gait cycle instead of the recording mean.
        #[arg(long)]
        per_cycle: bool,
    },
    /// Train correction networks (`--mode signals|descriptors`) on the non-held-out participants.
    Train {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Directory receiving signal_models.json or descriptor_models.json.
        #[arg(long, value_name = "DIR", default_value = "models")]
        models: PathBuf,
    },
    /// Correct one camera recording (signal models) or a descriptor CSV (descriptor models).
    Apply {
        #[arg(long, value_name = "FILE")]
        models: PathBuf,
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "camera")]
        kind: InputKind,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Compare mocap, raw camera and both corrections on the held-out participants.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Directory holding signal_models.json and descriptor_models.json.
        #[arg(long, value_name = "DIR", default_value = "models")]
        models: PathBuf,
        #[arg(long, value_name = "DIR", default_value = "report")]
        out: PathBuf,
    },
}

fn resolve(cli: &Cli) -> Result<Context, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        commands::require_file(path, "config file")?;
        if !cli.paper_defaults {
            let text = commands::read_text(path)?;
            apply_config_text(&mut cfg, &text)
                .map_err(|(line, msg)| CliError::Validation(format!("{}:{line}: {msg}", path.display())))?;
        }
    }
    cli.options.apply(&mut cfg);
    let pipeline = cfg.pipeline().map_err(CliError::Validation)?;

    let exec = match cli.jobs {
        Some(0) => return Err(CliError::Validation("--jobs must be at least 1".into())),
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.jobs {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let created = cli.fixed_epoch.unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
    let provenance = cfg.provenance(created);
    Ok(Context { cfg, pipeline, exec, provenance })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = resolve(&cli)?;
    match &cli.command {
        Command::Synth { out } => commands::synth(&ctx, out),
        Command::Preprocess { manifest, out } => commands::preprocess(&ctx, manifest, out),
        Command::Angles { input, kind, out, frames } => commands::angles(&ctx, input, *kind, out, frames.as_deref()),
        Command::Events { input, kind, out } => commands::events(&ctx, input, *kind, out),
        Command::Descriptors { input, kind, out, participant, trial, per_cycle } => {
            commands::descriptors(&ctx, input, *kind, out, participant.as_deref(), trial.as_deref(), *per_cycle)
        }
        Command::Train { manifest, models } => commands::train(&ctx, manifest, models),
        Command::Apply { models, input, kind, out } => commands::apply(&ctx, models, input, *kind, out),
        Command::Evaluate { manifest, models, out } => commands::evaluate(&ctx, manifest, models, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
