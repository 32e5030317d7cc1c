//! Pipeline orchestration behind the `maestro` binary.
//!
//! Each subcommand reads a JSON job list or a manifest, processes independent items on a
//! fixed-size worker pool, and writes its outputs plus a JSON-lines report in input order,
//! so results do not depend on the worker count.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{PipelineConfig, DEFAULT_CONFIG_TOML};

#[derive(Debug, Parser)]
#[command(name = "maestro", version, about = "Align, segment and curate paired piano audio/MIDI recordings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured worker count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Metadata CSV (canonical_composer, canonical_title, split, year, midi_filename,
    /// audio_filename, duration).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coarse-align ordered recordings against their session MIDI.
    Align {
        /// JSON list of `{"id", "midi", "audio": [...]}` sessions.
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split aligned pairs into pieces and write the sliced MIDI and audio.
    Segment {
        /// JSON list of `{"id", "midi", "audio"?, "shift"?, "durations"?, "pieces"?}` jobs.
        #[arg(long)]
        jobs: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fine-align MIDI to audio with banded DTW and write warped MIDI and warp maps.
    Finewarp {
        /// JSON list of `{"id", "midi", "audio"}` pairs.
        #[arg(long)]
        jobs: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Assign compositions to train/validation/test and verify the result.
    Split {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-split counts, hours and (optionally) notes.
    Stats {
        /// Count notes by parsing each performance's MIDI file under the corpus root.
        #[arg(long)]
        count_notes: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Onset rolls (and optionally frame/offset training labels) for MIDI files.
    Roll {
        midi: Vec<PathBuf>,
        #[arg(long)]
        labels: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Score estimated transcriptions against references with matching file names.
    Eval {
        #[arg(long)]
        ref_dir: PathBuf,
        #[arg(long)]
        est_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample augmentation parameter sets and their effect chains.
    AugmentSpec {
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the annotated default configuration.
    DefaultConfig,
}

/// Items that failed; the process exits non-zero when this is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Outcome {
    pub processed: usize,
    pub failures: usize,
}

pub fn load_config(global: &GlobalArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = global.workers {
        cfg.workers = workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    if let Command::DefaultConfig = cli.command {
        print!("{DEFAULT_CONFIG_TOML}");
        return Ok(Outcome::default());
    }
    let cfg = load_config(&cli.global)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    pool.install(|| commands::dispatch(&cfg, &cli.global, &cli.command))
}
