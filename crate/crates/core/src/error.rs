use thiserror::Error;

use crate::audio::AudioError;
use crate::coarse::AlignError;
use crate::dataset::{EffectChainError, ManifestError, RollError};
use crate::dtw::DtwError;
use crate::midi::MidiError;
use crate::segment::SegmentError;

/// Umbrella error for callers that combine several pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Roll(#[from] RollError),
    #[error(transparent)]
    EffectChain(#[from] EffectChainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
