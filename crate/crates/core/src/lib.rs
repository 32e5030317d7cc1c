//! Alignment, segmentation and curation toolkit for paired piano audio/MIDI recordings.
//!
//! The pipeline mirrors how a large paired corpus is built from concert recordings:
//!
//! ```text
//! raw audio + session MIDI -> coarse alignment -> piece segmentation -> fine (DTW) warp
//!                          -> composition-disjoint splits, statistics, rolls, labels, scores
//! ```
//!
//! Signal-processing types are generic over the sample type ([`Real`]: `f32` or `f64`);
//! the aliases below name the common instantiations.

pub mod audio;
pub mod coarse;
pub mod dataset;
pub mod dtw;
pub mod eval;
pub mod midi;
pub mod scalar;
pub mod segment;

mod error;

pub use error::{Error, Result};
pub use scalar::Real;

pub type AudioBuffer32 = audio::AudioBuffer<f32>;
pub type AudioBuffer64 = audio::AudioBuffer<f64>;
pub type Cqt32 = audio::Cqt<f32>;
pub type Cqt64 = audio::Cqt<f64>;
pub type OnsetRoll32 = dataset::Roll<f32>;
pub type OnsetRoll64 = dataset::Roll<f64>;
