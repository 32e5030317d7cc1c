use std::fmt;

use log::warn;

use super::{MidiError, Note, NoteSequence, PedalEvent};

const DEFAULT_TEMPO_US: u32 = 500_000;
const WRITE_DIVISION: u16 = 480;
const WRITE_TEMPO_US: u32 = 500_000;

/// Tick rate of files produced by [`write_smf`]: 480 ticks per quarter at 120 BPM.
pub const WRITE_TICKS_PER_SECOND: f64 = 960.0;

/// Recoverable irregularity found while parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseWarning {
    /// A note-on never received its note-off and was closed at the end of its track.
    UnmatchedNoteOn { track: usize, pitch: u8, onset: f64, closed_at: f64 },
    /// A note collapsed to zero length (re-strike or end of track at the onset tick) and was dropped.
    ZeroLengthNote { track: usize, pitch: u8, time: f64 },
    MissingEndOfTrack { track: usize },
    MissingTracks { declared: usize, found: usize },
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseWarning::UnmatchedNoteOn { track, pitch, onset, closed_at } => write!(
                f,
                "track {track}: note-on pitch {pitch} at {onset:.3}s has no note-off; closed at {closed_at:.3}s"
            ),
            ParseWarning::ZeroLengthNote { track, pitch, time } => {
                write!(f, "track {track}: dropped zero-length note pitch {pitch} at {time:.3}s")
            }
            ParseWarning::MissingEndOfTrack { track } => write!(f, "track {track}: no end-of-track event"),
            ParseWarning::MissingTracks { declared, found } => {
                write!(f, "header declares {declared} tracks but only {found} were found")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedSmf {
    pub sequence: NoteSequence,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    NoteOn { pitch: u8, velocity: u8 },
    NoteOff { pitch: u8 },
    Pedal { value: u8 },
    Tempo { us_per_quarter: u32 },
}

#[derive(Debug, Clone, Copy)]
struct TimedEvent {
    tick: u64,
    kind: EventKind,
}

struct RawTrack {
    events: Vec<TimedEvent>,
    end_tick: u64,
    has_end: bool,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    track: usize,
}

impl<'a> Reader<'a> {
    fn truncated(&self) -> MidiError {
        MidiError::TruncatedTrack { track: self.track, offset: self.pos }
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self.bytes.get(self.pos).ok_or_else(|| self.truncated())?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Result<u8, MidiError> {
        self.bytes.get(self.pos).copied().ok_or_else(|| self.truncated())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| self.truncated())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    /// Variable-length quantity: at most four bytes, seven bits each.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::MalformedEvent {
            track: self.track,
            offset: self.pos,
            reason: "variable-length quantity longer than 4 bytes".into(),
        })
    }

    fn data_byte(&mut self) -> Result<u8, MidiError> {
        let b = self.u8()?;
        if b & 0x80 != 0 {
            return Err(MidiError::MalformedEvent {
                track: self.track,
                offset: self.pos - 1,
                reason: format!("expected data byte, found status 0x{b:02x}"),
            });
        }
        Ok(b)
    }
}

fn parse_track(data: &[u8], track: usize) -> Result<RawTrack, MidiError> {
    let mut r = Reader { bytes: data, pos: 0, track };
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut events = Vec::new();
    while r.pos < data.len() {
        tick += u64::from(r.vlq()?);
        let status = if r.peek()? & 0x80 != 0 {
            r.u8()?
        } else {
            running.ok_or_else(|| MidiError::MalformedEvent {
                track,
                offset: r.pos,
                reason: "data byte without running status".into(),
            })?
        };
        match status {
            0xff => {
                running = None;
                let meta_type = r.u8()?;
                let len = r.vlq()? as usize;
                let payload = r.take(len)?;
                match meta_type {
                    0x2f => {
                        return Ok(RawTrack { events, end_tick: tick, has_end: true });
                    }
                    0x51 => {
                        if payload.len() != 3 {
                            return Err(MidiError::MalformedEvent {
                                track,
                                offset: r.pos,
                                reason: "tempo meta event must carry 3 bytes".into(),
                            });
                        }
                        let us = u32::from(payload[0]) << 16 | u32::from(payload[1]) << 8 | u32::from(payload[2]);
                        events.push(TimedEvent { tick, kind: EventKind::Tempo { us_per_quarter: us.max(1) } });
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0xf1..=0xfe => {
                return Err(MidiError::MalformedEvent {
                    track,
                    offset: r.pos,
                    reason: format!("system message 0x{status:02x} is not valid in a file"),
                });
            }
            _ => {
                running = Some(status);
                let kind = status & 0xf0;
                match kind {
                    0x80 => {
                        let pitch = r.data_byte()?;
                        r.data_byte()?;
                        events.push(TimedEvent { tick, kind: EventKind::NoteOff { pitch } });
                    }
                    0x90 => {
                        let pitch = r.data_byte()?;
                        let velocity = r.data_byte()?;
                        let kind = if velocity == 0 {
                            EventKind::NoteOff { pitch }
                        } else {
                            EventKind::NoteOn { pitch, velocity }
                        };
                        events.push(TimedEvent { tick, kind });
                    }
                    0xb0 => {
                        let controller = r.data_byte()?;
                        let value = r.data_byte()?;
                        if controller == 64 {
                            events.push(TimedEvent { tick, kind: EventKind::Pedal { value } });
                        }
                    }
                    0xa0 | 0xe0 => {
                        r.data_byte()?;
                        r.data_byte()?;
                    }
                    0xc0 | 0xd0 => {
                        r.data_byte()?;
                    }
                    _ => unreachable!("status bytes are >= 0x80"),
                }
            }
        }
    }
    Ok(RawTrack { events, end_tick: tick, has_end: false })
}

/// Piecewise-constant tempo map converting ticks to seconds.
struct TempoMap {
    division: f64,
    /// (start tick, seconds at start tick, microseconds per quarter)
    segments: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    fn new(division: u16, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|c| c.0);
        let division = f64::from(division);
        let mut segments = vec![(0u64, 0.0f64, DEFAULT_TEMPO_US)];
        for (tick, tempo) in changes {
            let &(t0, s0, us0) = segments.last().unwrap();
            let secs = s0 + (tick - t0) as f64 * f64::from(us0) / (division * 1e6);
            if tick == t0 {
                segments.pop();
            }
            segments.push((tick, secs, tempo));
        }
        TempoMap { division, segments }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = self.segments.partition_point(|s| s.0 <= tick).saturating_sub(1);
        let (t0, s0, us) = self.segments[idx];
        s0 + (tick - t0) as f64 * f64::from(us) / (self.division * 1e6)
    }
}

/// Parses a format 0 or 1 Standard MIDI File into a [`NoteSequence`].
///
/// Warnings are logged; use [`parse_smf_with_warnings`] to inspect them.
pub fn parse_smf(bytes: &[u8]) -> Result<NoteSequence, MidiError> {
    let parsed = parse_smf_with_warnings(bytes)?;
    for w in &parsed.warnings {
        warn!("{w}");
    }
    Ok(parsed.sequence)
}

pub fn parse_smf_with_warnings(bytes: &[u8]) -> Result<ParsedSmf, MidiError> {
    if bytes.len() < 14 || &bytes[0..4] != b"MThd" {
        return Err(MidiError::MalformedHeader("missing MThd chunk".into()));
    }
    let header_len = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    if header_len < 6 || 8 + header_len > bytes.len() {
        return Err(MidiError::MalformedHeader(format!("bad header length {header_len}")));
    }
    let format = u16::from_be_bytes([bytes[8], bytes[9]]);
    let ntracks = u16::from_be_bytes([bytes[10], bytes[11]]) as usize;
    let division = u16::from_be_bytes([bytes[12], bytes[13]]);
    if format > 1 {
        return Err(MidiError::UnsupportedFormat(format));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedDivision);
    }
    if division == 0 {
        return Err(MidiError::MalformedHeader("zero ticks per quarter note".into()));
    }

    let mut warnings = Vec::new();
    let mut tracks = Vec::new();
    let mut pos = 8 + header_len;
    while pos + 8 <= bytes.len() && tracks.len() < ntracks {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_be_bytes([bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7]]) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or(MidiError::TruncatedTrack { track: tracks.len(), offset: pos })?;
        if id == b"MTrk" {
            let idx = tracks.len();
            let track = parse_track(&bytes[start..end], idx).map_err(|e| match e {
                MidiError::TruncatedTrack { track, offset } => MidiError::TruncatedTrack { track, offset: offset + start },
                other => other,
            })?;
            if !track.has_end {
                warnings.push(ParseWarning::MissingEndOfTrack { track: idx });
            }
            tracks.push(track);
        }
        pos = end;
    }
    if tracks.len() < ntracks {
        warnings.push(ParseWarning::MissingTracks { declared: ntracks, found: tracks.len() });
    }

    let tempo_changes = tracks
        .iter()
        .flat_map(|t| t.events.iter())
        .filter_map(|e| match e.kind {
            EventKind::Tempo { us_per_quarter } => Some((e.tick, us_per_quarter)),
            _ => None,
        })
        .collect();
    let tempo = TempoMap::new(division, tempo_changes);

    let mut notes = Vec::new();
    let mut pedals = Vec::new();
    let mut total_time: f64 = 0.0;
    for (idx, track) in tracks.iter().enumerate() {
        let mut sounding: [Option<(u64, u8)>; 128] = [None; 128];
        let close = |pitch: u8, start: (u64, u8), tick: u64, notes: &mut Vec<Note>, warnings: &mut Vec<ParseWarning>| {
            let onset = tempo.seconds(start.0);
            if tick > start.0 {
                notes.push(Note { pitch, onset, offset: tempo.seconds(tick), velocity: start.1 });
            } else {
                warnings.push(ParseWarning::ZeroLengthNote { track: idx, pitch, time: onset });
            }
        };
        for ev in &track.events {
            match ev.kind {
                EventKind::NoteOn { pitch, velocity } => {
                    if let Some(prev) = sounding[pitch as usize].take() {
                        close(pitch, prev, ev.tick, &mut notes, &mut warnings);
                    }
                    sounding[pitch as usize] = Some((ev.tick, velocity));
                }
                EventKind::NoteOff { pitch } => {
                    if let Some(prev) = sounding[pitch as usize].take() {
                        close(pitch, prev, ev.tick, &mut notes, &mut warnings);
                    }
                }
                EventKind::Pedal { value } => pedals.push(PedalEvent { time: tempo.seconds(ev.tick), value }),
                EventKind::Tempo { .. } => {}
            }
        }
        for pitch in 0..128u8 {
            if let Some(prev) = sounding[pitch as usize].take() {
                let closed_at = tempo.seconds(track.end_tick);
                if track.end_tick > prev.0 {
                    warnings.push(ParseWarning::UnmatchedNoteOn {
                        track: idx,
                        pitch,
                        onset: tempo.seconds(prev.0),
                        closed_at,
                    });
                }
                close(pitch, prev, track.end_tick, &mut notes, &mut warnings);
            }
        }
        total_time = total_time.max(tempo.seconds(track.end_tick));
    }

    Ok(ParsedSmf { sequence: NoteSequence::new(notes, pedals, total_time), warnings })
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

/// Serializes a sequence as a single-track format 0 file at 480 ticks per quarter and
/// 120 BPM. Overlapping notes of the same pitch are truncated at the later onset.
pub fn write_smf(ns: &NoteSequence) -> Vec<u8> {
    let to_tick = |t: f64| (t * WRITE_TICKS_PER_SECOND).round().max(0.0) as u64;

    // (tick, order, bytes); order puts note-offs before pedal changes before note-ons.
    let mut events: Vec<(u64, u8, [u8; 3])> = Vec::with_capacity(ns.len() * 2 + ns.pedal_events().len());
    let mut next_onset_tick: [Option<u64>; 128] = [None; 128];
    for note in ns.notes().iter().rev() {
        let on = to_tick(note.onset);
        let mut off = to_tick(note.offset).max(on + 1);
        if let Some(next) = next_onset_tick[note.pitch as usize] {
            if next >= on {
                off = off.min(next.max(on));
            }
        }
        next_onset_tick[note.pitch as usize] = Some(on);
        if off > on {
            events.push((on, 2, [0x90, note.pitch, note.velocity.clamp(1, 127)]));
            events.push((off, 0, [0x80, note.pitch, 0]));
        }
    }
    for p in ns.pedal_events() {
        events.push((to_tick(p.time), 1, [0xb0, 64, p.value.min(127)]));
    }
    events.sort_by_key(|e| (e.0, e.1));

    let mut track = Vec::with_capacity(events.len() * 4 + 16);
    track.extend_from_slice(&[0x00, 0xff, 0x51, 0x03]);
    track.extend_from_slice(&WRITE_TEMPO_US.to_be_bytes()[1..]);
    let mut last = 0u64;
    for (tick, _, msg) in &events {
        write_vlq(&mut track, (tick - last) as u32);
        track.extend_from_slice(msg);
        last = *tick;
    }
    let end = to_tick(ns.total_time()).max(last);
    write_vlq(&mut track, (end - last) as u32);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&WRITE_DIVISION.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
