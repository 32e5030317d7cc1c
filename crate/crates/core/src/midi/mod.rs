//! Note-event representation of piano performances and Standard MIDI File I/O.

mod smf;
mod sustain;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use smf::{parse_smf, parse_smf_with_warnings, write_smf, ParseWarning, ParsedSmf, WRITE_TICKS_PER_SECOND};
pub use sustain::{apply_sustain, find_silences, Silence, SUSTAIN_THRESHOLD};

/// Lowest and highest MIDI pitch of an 88-key piano (A0 and C8).
pub const PIANO_LOWEST_PITCH: u8 = 21;
pub const PIANO_HIGHEST_PITCH: u8 = 108;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MidiError {
    #[error("malformed header chunk: {0}")]
    MalformedHeader(String),
    #[error("unsupported SMF format {0} (only formats 0 and 1 are read)")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    UnsupportedDivision,
    #[error("track {track} is truncated at byte {offset}")]
    TruncatedTrack { track: usize, offset: usize },
    #[error("malformed event in track {track} at byte {offset}: {reason}")]
    MalformedEvent {
        track: usize,
        offset: usize,
        reason: String,
    },
    #[error("invalid note (pitch {pitch}, velocity {velocity}, {onset}..{offset} s)")]
    InvalidNote {
        pitch: u8,
        velocity: u8,
        onset: f64,
        offset: f64,
    },
}

/// A single sounding key: pitch, onset and offset in seconds, strike velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub pitch: u8,
    pub onset: f64,
    pub offset: f64,
    pub velocity: u8,
}

impl Note {
    pub fn new(pitch: u8, onset: f64, offset: f64, velocity: u8) -> Result<Self, MidiError> {
        let note = Note {
            pitch,
            onset,
            offset,
            velocity,
        };
        if note.is_valid() {
            Ok(note)
        } else {
            Err(MidiError::InvalidNote {
                pitch,
                velocity,
                onset,
                offset,
            })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.pitch <= 127
            && (1..=127).contains(&self.velocity)
            && self.onset.is_finite()
            && self.offset.is_finite()
            && self.onset >= 0.0
            && self.offset > self.onset
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    fn sort_cmp(&self, other: &Self) -> Ordering {
        self.onset
            .total_cmp(&other.onset)
            .then(self.pitch.cmp(&other.pitch))
            .then(self.offset.total_cmp(&other.offset))
            .then(self.velocity.cmp(&other.velocity))
    }
}

/// Sustain-pedal (controller 64) change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedalEvent {
    pub time: f64,
    pub value: u8,
}

/// Notes ordered by `(onset, pitch, offset)` plus the sustain-pedal track.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoteSequence {
    notes: Vec<Note>,
    pedal_events: Vec<PedalEvent>,
    total_time: f64,
}

impl NoteSequence {
    /// Builds a sequence, sorting notes and pedal events. `total_time` is raised to
    /// cover the latest note offset and pedal event.
    pub fn new(mut notes: Vec<Note>, mut pedal_events: Vec<PedalEvent>, total_time: f64) -> Self {
        notes.sort_by(Note::sort_cmp);
        pedal_events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let latest_note = notes.iter().map(|n| n.offset).fold(0.0, f64::max);
        let latest_pedal = pedal_events.iter().map(|p| p.time).fold(0.0, f64::max);
        let total_time = total_time.max(latest_note).max(latest_pedal).max(0.0);
        NoteSequence {
            notes,
            pedal_events,
            total_time,
        }
    }

    pub fn from_notes(notes: Vec<Note>) -> Self {
        Self::new(notes, Vec::new(), 0.0)
    }

    pub fn empty(total_time: f64) -> Self {
        Self::new(Vec::new(), Vec::new(), total_time)
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn pedal_events(&self) -> &[PedalEvent] {
        &self.pedal_events
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn first_onset(&self) -> Option<f64> {
        self.notes.first().map(|n| n.onset)
    }

    pub fn last_offset(&self) -> Option<f64> {
        self.notes.iter().map(|n| n.offset).reduce(f64::max)
    }

    /// Onset times in ascending order.
    pub fn onsets(&self) -> impl Iterator<Item = f64> + '_ {
        self.notes.iter().map(|n| n.onset)
    }

    /// Notes whose onset lies in `[start, end)`, re-timed so that `start` becomes zero.
    /// Offsets are clipped at `end`; the pedal state at `start` is carried into the slice.
    pub fn slice(&self, start: f64, end: f64) -> NoteSequence {
        let notes = self
            .notes
            .iter()
            .filter(|n| n.onset >= start && n.onset < end)
            .map(|n| Note {
                onset: n.onset - start,
                offset: n.offset.min(end) - start,
                ..*n
            })
            .filter(|n| n.offset > n.onset)
            .collect();
        let mut pedals = Vec::new();
        if let Some(p) = self.pedal_events.iter().rfind(|p| p.time < start) {
            pedals.push(PedalEvent { time: 0.0, value: p.value });
        }
        pedals.extend(
            self.pedal_events
                .iter()
                .filter(|p| p.time >= start && p.time < end)
                .map(|p| PedalEvent { time: p.time - start, value: p.value }),
        );
        NoteSequence::new(notes, pedals, (end.min(self.total_time) - start).max(0.0))
    }

    /// Applies `f` to every timestamp. `f` must be non-decreasing.
    pub fn map_times(&self, f: impl Fn(f64) -> f64) -> NoteSequence {
        let notes = self
            .notes
            .iter()
            .map(|n| Note {
                onset: f(n.onset),
                offset: f(n.offset),
                ..*n
            })
            .collect();
        let pedals = self
            .pedal_events
            .iter()
            .map(|p| PedalEvent { time: f(p.time), value: p.value })
            .collect();
        NoteSequence::new(notes, pedals, f(self.total_time))
    }

    pub(crate) fn with_notes(&self, notes: Vec<Note>) -> NoteSequence {
        NoteSequence::new(notes, self.pedal_events.clone(), self.total_time)
    }
}
