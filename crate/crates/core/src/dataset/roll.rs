use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::{Note, NoteSequence, PIANO_HIGHEST_PITCH, PIANO_LOWEST_PITCH};
use crate::scalar::Real;

/// Offset labels cover this long after each note end.
pub const OFFSET_WINDOW_SECONDS: f64 = 0.032;

#[derive(Debug, Error, PartialEq)]
pub enum RollError {
    #[error("note with pitch {pitch} at {onset:.3} s is outside the piano range")]
    PitchOutOfRange { pitch: u8, onset: f64 },
    #[error("frame rate must be positive")]
    InvalidFrameRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollConfig {
    pub frame_rate: f64,
    /// Velocities are divided by this to land in `[0, 1]`.
    pub velocity_divisor: f64,
}

impl Default for RollConfig {
    fn default() -> Self {
        RollConfig { frame_rate: 250.0, velocity_divisor: 127.0 }
    }
}

/// Key-by-frame matrix; key 0 is the lowest piano key (MIDI 21).
#[derive(Debug, Clone, PartialEq)]
pub struct Roll<T> {
    data: Vec<T>,
    n_keys: usize,
    n_frames: usize,
    frame_rate: f64,
}

impl<T: Real> Roll<T> {
    pub fn zeros(n_keys: usize, n_frames: usize, frame_rate: f64) -> Self {
        Roll { data: vec![T::zero(); n_keys * n_frames], n_keys, n_frames, frame_rate }
    }

    pub fn n_keys(&self) -> usize {
        self.n_keys
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn get(&self, key: usize, frame: usize) -> T {
        self.data[key * self.n_frames + frame]
    }

    pub fn set(&mut self, key: usize, frame: usize, v: T) {
        self.data[key * self.n_frames + frame] = v;
    }

    /// Key-major values (`n_frames` per key).
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn key_row(&self, key: usize) -> &[T] {
        &self.data[key * self.n_frames..(key + 1) * self.n_frames]
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| !v.is_zero()).count()
    }

    /// Space-separated rows, one per key.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 4);
        for k in 0..self.n_keys {
            let row: Vec<String> = self.key_row(k).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

const N_KEYS: usize = (PIANO_HIGHEST_PITCH - PIANO_LOWEST_PITCH + 1) as usize;

fn key_of(n: &Note) -> Result<usize, RollError> {
    if (PIANO_LOWEST_PITCH..=PIANO_HIGHEST_PITCH).contains(&n.pitch) {
        Ok((n.pitch - PIANO_LOWEST_PITCH) as usize)
    } else {
        Err(RollError::PitchOutOfRange { pitch: n.pitch, onset: n.onset })
    }
}

fn frame_of(t: f64, frame_rate: f64) -> usize {
    (t * frame_rate).floor().max(0.0) as usize
}

/// [`onset_roll_with`] at 250 Hz with velocities scaled by 1/127.
pub fn onset_roll<T: Real>(ns: &NoteSequence) -> Result<Roll<T>, RollError> {
    onset_roll_with(ns, &RollConfig::default())
}

/// 88-key roll with each note's scaled velocity at frame `floor(onset * frame_rate)`.
/// Onsets sharing a cell keep the larger velocity. Shape is `88 x ceil(rate * total_time)`.
pub fn onset_roll_with<T: Real>(ns: &NoteSequence, cfg: &RollConfig) -> Result<Roll<T>, RollError> {
    if !(cfg.frame_rate > 0.0) {
        return Err(RollError::InvalidFrameRate);
    }
    let n_frames = (cfg.frame_rate * ns.total_time()).ceil() as usize;
    let mut roll = Roll::zeros(N_KEYS, n_frames, cfg.frame_rate);
    for n in ns.notes() {
        let key = key_of(n)?;
        let frame = frame_of(n.onset, cfg.frame_rate);
        if frame >= n_frames {
            continue;
        }
        let v = T::from_f64_lossy(f64::from(n.velocity) / cfg.velocity_divisor);
        if v > roll.get(key, frame) {
            roll.set(key, frame, v);
        }
    }
    Ok(roll)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLabels<T> {
    pub onset: Roll<T>,
    pub frame: Roll<T>,
    pub offset: Roll<T>,
}

/// Binary onset, frame and offset rolls.
///
/// Frames `[floor(on * rate), ceil(off * rate))` are active; the offset window covers
/// `round(0.032 * rate)` frames from `floor(off * rate)`. The frame count is
/// `ceil(rate * total_time)`, extended when an offset window runs past it.
pub fn training_labels<T: Real>(ns: &NoteSequence, frame_rate: f64) -> Result<TrainingLabels<T>, RollError> {
    if !(frame_rate > 0.0) {
        return Err(RollError::InvalidFrameRate);
    }
    let window = (OFFSET_WINDOW_SECONDS * frame_rate).round() as usize;
    let mut n_frames = (frame_rate * ns.total_time()).ceil() as usize;
    for n in ns.notes() {
        key_of(n)?;
        n_frames = n_frames.max(frame_of(n.offset, frame_rate) + window).max((n.offset * frame_rate).ceil() as usize);
    }
    let one = T::one();
    let mut onset = Roll::zeros(N_KEYS, n_frames, frame_rate);
    let mut frame = Roll::zeros(N_KEYS, n_frames, frame_rate);
    let mut offset = Roll::zeros(N_KEYS, n_frames, frame_rate);
    for n in ns.notes() {
        let key = key_of(n)?;
        let start = frame_of(n.onset, frame_rate);
        onset.set(key, start, one);
        for f in start..(n.offset * frame_rate).ceil() as usize {
            frame.set(key, f, one);
        }
        let off = frame_of(n.offset, frame_rate);
        for f in off..off + window {
            offset.set(key, f, one);
        }
    }
    Ok(TrainingLabels { onset, frame, offset })
}
