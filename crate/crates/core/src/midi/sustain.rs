use serde::{Deserialize, Serialize};

use super::{Note, NoteSequence};

/// Controller-64 value at or above which the pedal counts as depressed.
pub const SUSTAIN_THRESHOLD: u8 = 64;

/// Interval during which no note sounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Silence {
    pub start: f64,
    pub end: f64,
}

impl Silence {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Extends note offsets while the sustain pedal is held.
///
/// A note whose key is released while the pedal value is `>= threshold` keeps sounding
/// until the pedal is released or the same pitch is struck again, whichever comes first.
/// Offsets are never shortened. Pedal events are kept unchanged.
pub fn apply_sustain(ns: &NoteSequence, threshold: u8) -> NoteSequence {
    let pedals = ns.pedal_events();
    if pedals.is_empty() {
        return ns.clone();
    }
    // Onsets per pitch, ascending (notes are already sorted by onset).
    let mut onsets_by_pitch: Vec<Vec<f64>> = vec![Vec::new(); 128];
    for n in ns.notes() {
        onsets_by_pitch[n.pitch as usize].push(n.onset);
    }

    let notes = ns
        .notes()
        .iter()
        .map(|n| {
            // Pedal state at the key release: last event at or before the offset.
            let idx = pedals.partition_point(|p| p.time <= n.offset);
            let held = idx > 0 && pedals[idx - 1].value >= threshold;
            if !held {
                return *n;
            }
            let release = pedals[idx..]
                .iter()
                .find(|p| p.value < threshold)
                .map_or(ns.total_time(), |p| p.time);
            let lane = &onsets_by_pitch[n.pitch as usize];
            let next_strike = lane[lane.partition_point(|&t| t <= n.onset)..]
                .first()
                .copied()
                .unwrap_or(f64::INFINITY);
            Note {
                offset: n.offset.max(release.min(next_strike)),
                ..*n
            }
        })
        .collect();
    ns.with_notes(notes)
}

/// Maximal gaps between notes of at least `min_duration` seconds, longest first
/// (ties broken by earlier start). Gaps before the first onset and after the last
/// offset are not silences. Apply [`apply_sustain`] first to account for pedalling.
pub fn find_silences(ns: &NoteSequence, min_duration: f64) -> Vec<Silence> {
    let mut silences = Vec::new();
    let mut covered_until: Option<f64> = None;
    for n in ns.notes() {
        match covered_until {
            Some(end) if n.onset > end => {
                if n.onset - end >= min_duration {
                    silences.push(Silence { start: end, end: n.onset });
                }
                covered_until = Some(n.offset);
            }
            Some(end) => covered_until = Some(end.max(n.offset)),
            None => covered_until = Some(n.offset),
        }
    }
    silences.sort_by(|a, b| b.duration().total_cmp(&a.duration()).then(a.start.total_cmp(&b.start)));
    silences
}
