//! Dataset-level products: manifests, composition-disjoint splits, summary statistics,
//! piano rolls with training labels, and augmentation parameters.

mod augment;
mod manifest;
mod roll;
mod split;
mod stats;

pub use augment::{emit_effect_chain, parse_effect_chain, sample_augmentation, AugmentationParams, AugmentationSpec, EffectChainError, REVERB_LOG_FLOOR};
pub use manifest::{composition_key, read_manifest, write_manifest, ManifestError, ManifestRecord, Split};
pub use roll::{onset_roll, onset_roll_with, training_labels, Roll, RollConfig, RollError, TrainingLabels, OFFSET_WINDOW_SECONDS};
pub use split::{make_split, verify_split, SplitAssignment, SplitConfig, SplitReport, Violation};
pub use stats::{compute_stats, StatsRow, StatsTable};
