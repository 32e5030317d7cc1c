//! Audio buffers, WAV I/O, resampling, reference synthesis and constant-Q features.

mod cqt;
mod resample;
mod synth;
mod wav;

use thiserror::Error;

use crate::scalar::Real;

pub use cqt::{cqt, normalize_cqt, to_db, Cqt, CqtKernel, CqtParams, CqtScale, DecayNormalization, DB_FLOOR};
pub use resample::resample_mono;
pub use synth::{synthesize, HARMONICS, SYNTH_DECAY_SECONDS, SYNTH_PEAK, SYNTH_RELEASE_SECONDS};
pub use wav::{read_wav, read_wav_file, write_wav, write_wav_file};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("malformed WAV data: {0}")]
    Malformed(String),
    #[error("expected 1 or 2 channels, got {0}")]
    Channels(u16),
    #[error("sample count {len} is not a multiple of the channel count {channels}")]
    Interleave { len: usize, channels: u16 },
    #[error("expected mono audio, got {0} channels")]
    NotMono(u16),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Interleaved PCM samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    samples: Vec<T>,
    sample_rate: u32,
    channels: u16,
}

impl<T: Real> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32, channels: u16) -> Result<Self, AudioError> {
        if !(1..=2).contains(&channels) {
            return Err(AudioError::Channels(channels));
        }
        if !samples.len().is_multiple_of(channels as usize) {
            return Err(AudioError::Interleave { len: samples.len(), channels });
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidParameter("sample rate must be positive".into()));
        }
        Ok(AudioBuffer { samples, sample_rate, channels })
    }

    pub fn mono(samples: Vec<T>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        AudioBuffer { samples, sample_rate, channels: 1 }
    }

    pub fn silence(frames: usize, sample_rate: u32) -> Self {
        Self::mono(vec![T::zero(); frames], sample_rate)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    /// Number of sample frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.frames() as f64 / f64::from(self.sample_rate)
    }

    /// De-interleaved copy of one channel.
    pub fn channel(&self, c: usize) -> Vec<T> {
        assert!(c < self.channels as usize, "channel {c} out of range");
        self.samples.iter().skip(c).step_by(self.channels as usize).copied().collect()
    }

    /// Average of all channels.
    pub fn to_mono(&self) -> AudioBuffer<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let scale = T::one() / T::from_f64_lossy(f64::from(self.channels));
        let samples = self
            .samples
            .chunks_exact(self.channels as usize)
            .map(|frame| frame.iter().copied().sum::<T>() * scale)
            .collect();
        AudioBuffer::mono(samples, self.sample_rate)
    }

    /// Sample frames `[start, end)`, clamped to the buffer.
    pub fn slice_frames(&self, start: usize, end: usize) -> AudioBuffer<T> {
        let ch = self.channels as usize;
        let end = end.min(self.frames());
        let start = start.min(end);
        AudioBuffer { samples: self.samples[start * ch..end * ch].to_vec(), ..*self }
    }

    /// Samples covering `[start, end)` seconds.
    pub fn slice_seconds(&self, start: f64, end: f64) -> AudioBuffer<T> {
        let sr = f64::from(self.sample_rate);
        let a = (start.max(0.0) * sr).round() as usize;
        let b = (end.max(0.0) * sr).round() as usize;
        self.slice_frames(a, b)
    }

    /// Appends zero frames up to `frames` total.
    pub fn padded_to(&self, frames: usize) -> AudioBuffer<T> {
        let mut out = self.clone();
        if frames > self.frames() {
            out.samples.resize(frames * self.channels as usize, T::zero());
        }
        out
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.abs()))
    }

    pub fn convert<U: Real>(&self) -> AudioBuffer<U> {
        AudioBuffer {
            samples: self.samples.iter().map(|s| U::from_f64_lossy(s.to_f64_lossy())).collect(),
            sample_rate: self.sample_rate,
            channels: self.channels,
        }
    }
}

impl<T: Real> AudioBuffer<T> {
    /// Zero-pads the end of the shorter buffer so both have the same number of frames.
    pub fn pad_to_equal(a: &AudioBuffer<T>, b: &AudioBuffer<T>) -> (AudioBuffer<T>, AudioBuffer<T>) {
        let n = a.frames().max(b.frames());
        (a.padded_to(n), b.padded_to(n))
    }
}
