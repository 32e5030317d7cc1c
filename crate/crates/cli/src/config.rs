use std::path::{Path, PathBuf};

use anyhow::Context;
use maestro_core::coarse::AlignmentConfig;
use maestro_core::dataset::{RollConfig, SplitConfig};
use maestro_core::dtw::DtwConfig;
use maestro_core::eval::MatchConfig;
use maestro_core::segment::{BacktrackConfig, FinalizeConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentSection {
    #[serde(flatten)]
    pub search: BacktrackConfig,
    #[serde(flatten)]
    pub finalize: FinalizeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    /// Input paths in job files are resolved against this directory.
    pub corpus_root: PathBuf,
    pub output_root: PathBuf,
    pub align: AlignmentConfig,
    pub segment: SegmentSection,
    pub finewarp: DtwConfig,
    pub split: SplitConfig,
    pub roll: RollConfig,
    pub eval: MatchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 1,
            corpus_root: PathBuf::from("."),
            output_root: PathBuf::from("out"),
            align: AlignmentConfig::default(),
            segment: SegmentSection::default(),
            finewarp: DtwConfig::default(),
            split: SplitConfig::default(),
            roll: RollConfig::default(),
            eval: MatchConfig::default(),
        }
    }
}

/// Annotated default configuration; parses to [`PipelineConfig::default`].
pub const DEFAULT_CONFIG_TOML: &str = r#"# Global settings. The seed drives the split shuffle and augmentation sampling.
seed = 0
workers = 1
corpus_root = "."
output_root = "out"

# Coarse alignment. CQT: 48 bins from MIDI 36 (C2), 12 per octave, dB floor -80.
[align]
sample_rate = 44100
hop = 4096
anchor_tolerance = 720.0
retry_silence = 30.0
mse_accept_threshold = 0.06
relative_threshold_factor = 2.0
trim_threshold_db = -50.0
trim_window = 0.05
decay_normalization = "db_ratio"

# Piece segmentation and boundary finalization.
[segment]
tolerance = 0.15
min_silence = 3.0
skip_silence_below = 10.0
max_nodes = 2000000
padding = 1.0
edge_cluster_max_notes = 5
edge_silence = 3.0

# Fine alignment: banded DTW over CQTs at ~2.9 ms resolution.
[finewarp]
sample_rate = 22050
hop = 64
band_radius = 2.5
penalty_samples = 100000
rng_seed = 0

[split]
targets = [0.8, 0.1, 0.1]
popularity_threshold = 5
composer_min_compositions = 3
composer_weight = 0.5
tolerance = 0.03

# Onset rolls at 250 Hz; offset labels span the 32 ms after each note end.
[roll]
frame_rate = 250.0
velocity_divisor = 127.0

[eval]
onset_tolerance = 0.05
offset_ratio = 0.2
offset_min_tolerance = 0.05
velocity_tolerance = 0.1
frame_size = 0.032
"#;

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: PipelineConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let positive = [
            ("align.hop", self.align.hop as f64),
            ("align.sample_rate", f64::from(self.align.sample_rate)),
            ("align.anchor_tolerance", self.align.anchor_tolerance),
            ("align.retry_silence", self.align.retry_silence),
            ("align.mse_accept_threshold", self.align.mse_accept_threshold),
            ("finewarp.hop", self.finewarp.hop as f64),
            ("finewarp.sample_rate", f64::from(self.finewarp.sample_rate)),
            ("finewarp.band_radius", self.finewarp.band_radius),
            ("finewarp.penalty_samples", self.finewarp.penalty_samples as f64),
            ("segment.tolerance", self.segment.search.tolerance),
            ("roll.frame_rate", self.roll.frame_rate),
            ("roll.velocity_divisor", self.roll.velocity_divisor),
            ("eval.onset_tolerance", self.eval.onset_tolerance),
            ("eval.frame_size", self.eval.frame_size),
        ];
        for (name, v) in positive {
            anyhow::ensure!(v > 0.0, "{name} must be positive");
        }
        anyhow::ensure!(self.workers >= 1, "workers must be at least 1");
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.corpus_root.join(p)
        }
    }
}
