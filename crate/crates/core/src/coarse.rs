//! Coarse alignment: locating each audio recording inside a long session MIDI file by
//! minimizing the mean squared error between normalized CQTs of the audio and of a
//! synthesized rendition of the MIDI.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{
    cqt, normalize_cqt, resample_mono, synthesize, AudioBuffer, AudioError, Cqt, CqtParams, CqtScale,
    DecayNormalization,
};
use crate::midi::NoteSequence;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("no acceptable alignment (best MSE {best_mse:.4} > threshold {threshold:.4})")]
    NoAcceptableAlignment { best_mse: f64, threshold: f64 },
    #[error("audio ({audio_frames} frames) does not fit in the remaining MIDI timeline")]
    AudioExhaustsMidi { audio_frames: usize, available_frames: usize },
    #[error("audio is silent after trimming")]
    SilentAudio,
    #[error("both CQTs must be decay-normalized")]
    ScaleMismatch,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub sample_rate: u32,
    pub hop: usize,
    /// Search radius in seconds around each anchor note-on.
    pub anchor_tolerance: f64,
    /// Minimum MIDI silence preceding a retry anchor, seconds.
    pub retry_silence: f64,
    /// Absolute MSE acceptance threshold, used until a session has accepted alignments.
    pub mse_accept_threshold: f64,
    /// Session threshold as a multiple of the running median of accepted MSEs.
    pub relative_threshold_factor: f64,
    pub trim_threshold_db: f64,
    pub trim_window: f64,
    pub decay_normalization: DecayNormalization,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            sample_rate: 44100,
            hop: 4096,
            anchor_tolerance: 720.0,
            retry_silence: 30.0,
            mse_accept_threshold: 0.06,
            relative_threshold_factor: 2.0,
            trim_threshold_db: -50.0,
            trim_window: 0.05,
            decay_normalization: DecayNormalization::default(),
        }
    }
}

impl AlignmentConfig {
    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseAlignment {
    pub audio_id: String,
    /// Position of the audio's first sample on the MIDI timeline, seconds.
    pub shift: f64,
    pub mse: f64,
    pub midi_range: (f64, f64),
    /// Leading silence removed from the audio before matching, seconds.
    pub trimmed: f64,
}

/// Normalized CQT of the synthesized session MIDI, computed once per session.
pub struct MidiReference<T> {
    cqt: Cqt<T>,
    midi: NoteSequence,
}

impl<T: Real> MidiReference<T> {
    pub fn new(midi: &NoteSequence, cfg: &AlignmentConfig) -> Result<Self, AlignError> {
        let synth: AudioBuffer<T> = synthesize(midi, cfg.sample_rate);
        let c = cqt(&synth, CqtParams::with_hop(cfg.hop))?;
        Ok(MidiReference { cqt: normalize_cqt(&c, cfg.decay_normalization), midi: midi.clone() })
    }

    pub fn cqt(&self) -> &Cqt<T> {
        &self.cqt
    }
}

/// Drops leading windows whose RMS level is below `rms_threshold_db` dBFS.
/// Returns the remaining audio and the trimmed duration in seconds.
pub fn trim_leading_silence<T: Real>(
    audio: &AudioBuffer<T>,
    rms_threshold_db: f64,
    window: f64,
) -> (AudioBuffer<T>, f64) {
    let sr = f64::from(audio.sample_rate());
    let win = ((window * sr).round() as usize).max(1);
    let ch = audio.channels() as usize;
    let threshold = 10f64.powf(rms_threshold_db / 20.0);
    let mut start = 0;
    while start < audio.frames() {
        let end = (start + win).min(audio.frames());
        let seg = &audio.samples()[start * ch..end * ch];
        let power = seg.iter().map(|s| s.to_f64_lossy().powi(2)).sum::<f64>() / seg.len() as f64;
        if power.sqrt() >= threshold {
            break;
        }
        start = end;
    }
    (audio.slice_frames(start, audio.frames()), start as f64 / sr)
}

fn squared_distance<T: Real>(a: &[T], b: &[T]) -> f64 {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (*x - *y) * (*x - *y)).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let total = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
    total.to_f64_lossy()
}

/// Mean squared difference between `audio_cqt` and the equally long window of `midi_cqt`
/// starting at frame `shift_frames`.
pub fn mse_at_shift<T: Real>(audio_cqt: &Cqt<T>, midi_cqt: &Cqt<T>, shift_frames: usize) -> Result<f64, AlignError> {
    if audio_cqt.scale() != CqtScale::DbNormalized || midi_cqt.scale() != CqtScale::DbNormalized {
        return Err(AlignError::ScaleMismatch);
    }
    let f = audio_cqt.n_frames();
    if shift_frames + f > midi_cqt.n_frames() || audio_cqt.n_bins() != midi_cqt.n_bins() {
        return Err(AlignError::AudioExhaustsMidi {
            audio_frames: f,
            available_frames: midi_cqt.n_frames().saturating_sub(shift_frames),
        });
    }
    Ok(mse_unchecked(audio_cqt, midi_cqt, shift_frames))
}

fn mse_unchecked<T: Real>(audio_cqt: &Cqt<T>, midi_cqt: &Cqt<T>, shift: usize) -> f64 {
    let n = audio_cqt.data().len();
    if n == 0 {
        return 0.0;
    }
    let window = &midi_cqt.data()[shift * midi_cqt.n_bins()..shift * midi_cqt.n_bins() + n];
    squared_distance(audio_cqt.data(), window) / n as f64
}

/// Note-on anchors at or after `cursor`: the first onset, then every onset preceded by
/// at least `retry_silence` seconds without sounding notes.
fn anchors(midi: &NoteSequence, cursor: f64, retry_silence: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut sounding_until = f64::NEG_INFINITY;
    for n in midi.notes() {
        if n.onset >= cursor && (out.is_empty() || n.onset - sounding_until >= retry_silence) {
            out.push(n.onset);
        }
        sounding_until = sounding_until.max(n.offset);
    }
    out
}

/// Locates one recording on the MIDI timeline, searching from `midi_cursor` onwards.
pub fn align_file<T: Real>(
    audio: &AudioBuffer<T>,
    midi: &NoteSequence,
    midi_cursor: f64,
    cfg: &AlignmentConfig,
) -> Result<CoarseAlignment, AlignError> {
    let reference = MidiReference::new(midi, cfg)?;
    align_with_reference("", audio, &reference, midi_cursor, cfg, cfg.mse_accept_threshold)
}

/// [`align_file`] against a precomputed reference with an explicit acceptance threshold.
pub fn align_with_reference<T: Real>(
    audio_id: &str,
    audio: &AudioBuffer<T>,
    reference: &MidiReference<T>,
    midi_cursor: f64,
    cfg: &AlignmentConfig,
    threshold: f64,
) -> Result<CoarseAlignment, AlignError> {
    let duration = audio.duration();
    let mono = if audio.sample_rate() == cfg.sample_rate {
        audio.to_mono()
    } else {
        resample_mono(audio, cfg.sample_rate)
    };
    let (trimmed_audio, trimmed) = trim_leading_silence(&mono, cfg.trim_threshold_db, cfg.trim_window);
    if trimmed_audio.is_empty() {
        return Err(AlignError::SilentAudio);
    }
    let audio_cqt = normalize_cqt(&cqt(&trimmed_audio, CqtParams::with_hop(cfg.hop))?, cfg.decay_normalization);

    let hop_s = cfg.hop_seconds();
    let midi_cqt = &reference.cqt;
    let f_audio = audio_cqt.n_frames();
    // Shifts are frame-quantized, so the cursor bound is honoured to within one hop.
    let min_shift = ((midi_cursor.max(0.0) + trimmed) / hop_s + 1e-9).floor() as usize;
    let max_shift = match midi_cqt.n_frames().checked_sub(f_audio) {
        Some(m) if m >= min_shift => m,
        _ => {
            return Err(AlignError::AudioExhaustsMidi {
                audio_frames: f_audio,
                available_frames: midi_cqt.n_frames().saturating_sub(min_shift),
            })
        }
    };
    let tolerance = (cfg.anchor_tolerance / hop_s).round() as usize;

    // Union of the anchor windows, as sorted disjoint inclusive ranges.
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    for anchor in anchors(&reference.midi, midi_cursor, cfg.retry_silence) {
        let centre = (anchor / hop_s).round() as usize;
        let lo = centre.saturating_sub(tolerance).max(min_shift);
        let hi = (centre + tolerance).min(max_shift);
        if lo > hi {
            continue;
        }
        match ranges.last_mut() {
            Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
            _ => ranges.push((lo, hi)),
        }
    }
    let candidates: Vec<usize> = ranges.iter().flat_map(|&(lo, hi)| lo..=hi).collect();
    if candidates.is_empty() {
        return Err(AlignError::AudioExhaustsMidi {
            audio_frames: f_audio,
            available_frames: midi_cqt.n_frames().saturating_sub(min_shift),
        });
    }
    let scores: Vec<f64> = candidates.par_iter().map(|&s| mse_unchecked(&audio_cqt, midi_cqt, s)).collect();
    // Candidates are increasing, so strict comparison keeps the smallest shift on ties.
    let (best, mse) = candidates
        .iter()
        .zip(&scores)
        .fold((0, f64::INFINITY), |acc, (&s, &m)| if m < acc.1 { (s, m) } else { acc });
    if mse > threshold || !mse.is_finite() {
        return Err(AlignError::NoAcceptableAlignment { best_mse: mse, threshold });
    }
    let shift = best as f64 * hop_s - trimmed;
    Ok(CoarseAlignment { audio_id: audio_id.to_string(), shift, mse, midi_range: (shift, shift + duration), trimmed })
}

/// Outcome for one recording of a session.
#[derive(Debug)]
pub struct SessionEntry {
    pub audio_id: String,
    pub outcome: Result<CoarseAlignment, AlignError>,
}

/// One line of the session report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub audio_id: String,
    pub status: String,
    pub shift: Option<f64>,
    pub mse: Option<f64>,
    pub midi_range: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl SessionEntry {
    pub fn report(&self) -> ReportRecord {
        match &self.outcome {
            Ok(a) => ReportRecord {
                audio_id: self.audio_id.clone(),
                status: "aligned".into(),
                shift: Some(a.shift),
                mse: Some(a.mse),
                midi_range: Some(a.midi_range),
                error: None,
            },
            Err(e) => ReportRecord {
                audio_id: self.audio_id.clone(),
                status: "failed".into(),
                shift: None,
                mse: match e {
                    AlignError::NoAcceptableAlignment { best_mse, .. } => Some(*best_mse),
                    _ => None,
                },
                midi_range: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Serializes session entries as JSON lines.
pub fn session_report(entries: &[SessionEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(&e.report()).expect("report records serialize") + "\n")
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Aligns recordings in order against one session MIDI. Each accepted recording advances
/// the MIDI cursor past its range; failures are recorded and skipped.
pub fn align_session<T: Real>(
    audios: &[(String, AudioBuffer<T>)],
    midi: &NoteSequence,
    cfg: &AlignmentConfig,
) -> Result<Vec<SessionEntry>, AlignError> {
    if audios.is_empty() {
        return Ok(Vec::new());
    }
    let reference = MidiReference::new(midi, cfg)?;
    let mut cursor = 0.0;
    let mut accepted = Vec::new();
    let mut entries = Vec::with_capacity(audios.len());
    for (id, audio) in audios {
        let threshold = if accepted.is_empty() {
            cfg.mse_accept_threshold
        } else {
            cfg.relative_threshold_factor * median(&accepted)
        };
        let outcome = align_with_reference(id, audio, &reference, cursor, cfg, threshold);
        if let Ok(a) = &outcome {
            cursor = a.midi_range.1;
            accepted.push(a.mse);
        }
        entries.push(SessionEntry { audio_id: id.clone(), outcome });
    }
    Ok(entries)
}
