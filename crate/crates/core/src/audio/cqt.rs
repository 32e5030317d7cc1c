use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AudioBuffer, AudioError};
use crate::scalar::{dot, Real};

/// Lower bound of the dB scale, relative to the matrix maximum.
pub const DB_FLOOR: f64 = -80.0;
const ZERO_REFERENCE: f64 = 1e-10;
const DIVISOR_GUARD: f64 = 1e-6;
const DECAY_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CqtScale {
    Linear,
    /// `20 log10(v / max)` floored at -80.
    Db,
    /// dB followed by the per-column decay normalization.
    DbNormalized,
}

/// How [`normalize_cqt`] divides each column by its (5-column averaged) minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayNormalization {
    /// Divide the floor-shifted values `dB + 80` by their averaged column minimum.
    ShiftedDb,
    /// Divide the dB values by their averaged column minimum (both non-positive).
    #[default]
    DbRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqtParams {
    pub hop: usize,
    pub fmin_pitch: u8,
    pub n_bins: usize,
    pub bins_per_octave: usize,
}

impl Default for CqtParams {
    fn default() -> Self {
        CqtParams { hop: 4096, fmin_pitch: 36, n_bins: 48, bins_per_octave: 12 }
    }
}

impl CqtParams {
    pub fn with_hop(hop: usize) -> Self {
        CqtParams { hop, ..Self::default() }
    }

    pub fn quality(&self) -> f64 {
        1.0 / (2f64.powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }

    pub fn center_frequency(&self, bin: usize) -> f64 {
        let semis = 12.0 * bin as f64 / self.bins_per_octave as f64;
        440.0 * 2f64.powf((f64::from(self.fmin_pitch) + semis - 69.0) / 12.0)
    }
}

/// Constant-Q magnitudes stored column by column (`n_bins` values per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct Cqt<T> {
    data: Vec<T>,
    n_bins: usize,
    hop_seconds: f64,
    bin_pitches: Vec<u8>,
    scale: CqtScale,
}

impl<T: Real> Cqt<T> {
    /// Builds a matrix from frame-major data. Bin pitches start at MIDI 36.
    pub fn from_columns(data: Vec<T>, n_bins: usize, hop_seconds: f64, scale: CqtScale) -> Self {
        assert!(n_bins > 0 && data.len().is_multiple_of(n_bins), "data length must be a multiple of n_bins");
        let bin_pitches = (0..n_bins).map(|k| 36u8.saturating_add(k as u8)).collect();
        Cqt { data, n_bins, hop_seconds, bin_pitches, scale }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.n_bins
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_seconds
    }

    pub fn bin_pitches(&self) -> &[u8] {
        &self.bin_pitches
    }

    pub fn scale(&self) -> CqtScale {
        self.scale
    }

    pub fn column(&self, frame: usize) -> &[T] {
        &self.data[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    pub fn get(&self, bin: usize, frame: usize) -> T {
        self.data[frame * self.n_bins + bin]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Frames `[start, end)`.
    pub fn frames(&self, start: usize, end: usize) -> Cqt<T> {
        Cqt { data: self.data[start * self.n_bins..end * self.n_bins].to_vec(), bin_pitches: self.bin_pitches.clone(), ..*self }
    }

    pub fn max_value(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn min_value(&self) -> T {
        self.data.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Cqt<T> {
        Cqt { data: self.data.iter().map(|&v| f(v)).collect(), bin_pitches: self.bin_pitches.clone(), ..*self }
    }
}

struct BinKernel<T> {
    len: usize,
    re: Vec<T>,
    im: Vec<T>,
}

/// Precomputed Hann-windowed complex kernels for one sample rate and parameter set.
pub struct CqtKernel<T> {
    params: CqtParams,
    sample_rate: u32,
    bins: Vec<BinKernel<T>>,
}

impl<T: Real> CqtKernel<T> {
    pub fn new(sample_rate: u32, params: CqtParams) -> Result<Self, AudioError> {
        if params.hop == 0 || params.n_bins == 0 || params.bins_per_octave == 0 {
            return Err(AudioError::InvalidParameter("hop, n_bins and bins_per_octave must be positive".into()));
        }
        let sr = f64::from(sample_rate);
        let q = params.quality();
        let bins = (0..params.n_bins)
            .map(|k| {
                let f = params.center_frequency(k);
                let len = (q * sr / f).ceil() as usize;
                let (mut re, mut im) = (Vec::with_capacity(len), Vec::with_capacity(len));
                for n in 0..len {
                    let w = (0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()) / len as f64;
                    let ph = -2.0 * PI * f * n as f64 / sr;
                    re.push(T::from_f64_lossy(w * ph.cos()));
                    im.push(T::from_f64_lossy(w * ph.sin()));
                }
                BinKernel { len, re, im }
            })
            .collect();
        Ok(CqtKernel { params, sample_rate, bins })
    }

    /// Length in samples of the lowest bin's analysis window.
    pub fn longest_window(&self) -> usize {
        self.bins.iter().map(|b| b.len).max().unwrap_or(0)
    }

    /// Magnitude transform of a mono signal. Frame `t` is centred on sample `t * hop`;
    /// samples outside the signal count as zeros.
    pub fn transform(&self, x: &[T]) -> Cqt<T> {
        let hop = self.params.hop;
        let n_bins = self.params.n_bins;
        let n_frames = x.len().div_ceil(hop);
        if x.len() < self.longest_window() {
            warn!(
                "signal of {} samples is shorter than the longest CQT window ({}); zero-padding",
                x.len(),
                self.longest_window()
            );
        }
        let mut data = vec![T::zero(); n_frames * n_bins];
        data.par_chunks_mut(n_bins).enumerate().for_each(|(t, col)| {
            let centre = (t * hop) as isize;
            for (k, kern) in self.bins.iter().enumerate() {
                let start = centre - (kern.len / 2) as isize;
                let lo = (-start).max(0) as usize;
                let hi = (x.len() as isize - start).clamp(0, kern.len as isize) as usize;
                if lo >= hi {
                    continue;
                }
                let seg = &x[(start + lo as isize) as usize..(start + hi as isize) as usize];
                let re = dot(seg, &kern.re[lo..hi]);
                let im = dot(seg, &kern.im[lo..hi]);
                col[k] = (re * re + im * im).sqrt();
            }
        });
        Cqt {
            data,
            n_bins,
            hop_seconds: hop as f64 / f64::from(self.sample_rate),
            bin_pitches: (0..n_bins)
                .map(|k| self.params.fmin_pitch.saturating_add((12 * k / self.params.bins_per_octave) as u8))
                .collect(),
            scale: CqtScale::Linear,
        }
    }
}

/// Magnitude constant-Q transform by direct kernel correlation. Produces `ceil(len / hop)` frames.
pub fn cqt<T: Real>(audio: &AudioBuffer<T>, params: CqtParams) -> Result<Cqt<T>, AudioError> {
    if audio.channels() != 1 {
        return Err(AudioError::NotMono(audio.channels()));
    }
    Ok(CqtKernel::new(audio.sample_rate(), params)?.transform(audio.samples()))
}

/// Converts linear magnitudes to dB relative to the matrix maximum, floored at -80 dB.
pub fn to_db<T: Real>(c: &Cqt<T>) -> Cqt<T> {
    assert_eq!(c.scale, CqtScale::Linear, "to_db expects linear magnitudes");
    let max = c.max_value().to_f64_lossy();
    let reference = if max > 0.0 { max } else { ZERO_REFERENCE };
    let mut out = c.map(|v| {
        let db = 20.0 * (v.to_f64_lossy() / reference).log10();
        T::from_f64_lossy(if db.is_nan() { DB_FLOOR } else { db.max(DB_FLOOR) })
    });
    out.scale = CqtScale::Db;
    out
}

/// dB conversion followed by decay normalization: each column is divided by the mean of
/// the column minima over a centred 5-column window (truncated at the edges).
pub fn normalize_cqt<T: Real>(c: &Cqt<T>, mode: DecayNormalization) -> Cqt<T> {
    let db = to_db(c);
    let n_bins = db.n_bins;
    let n_frames = db.n_frames();
    // Non-negative per-cell magnitude being divided, per mode.
    let value = |v: T| -> f64 {
        match mode {
            DecayNormalization::ShiftedDb => v.to_f64_lossy() - DB_FLOOR,
            DecayNormalization::DbRatio => -v.to_f64_lossy(),
        }
    };
    let col_min: Vec<f64> = (0..n_frames)
        .map(|t| match mode {
            DecayNormalization::ShiftedDb => db.column(t).iter().map(|&v| value(v)).fold(f64::INFINITY, f64::min),
            // The dB minimum is the largest magnitude of -dB.
            DecayNormalization::DbRatio => db.column(t).iter().map(|&v| value(v)).fold(0.0, f64::max),
        })
        .collect();
    let half = DECAY_WINDOW / 2;
    let mut data = Vec::with_capacity(db.data.len());
    for t in 0..n_frames {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(n_frames);
        let avg = col_min[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        let divisor = avg.max(DIVISOR_GUARD);
        data.extend(db.column(t).iter().map(|&v| T::from_f64_lossy(value(v) / divisor)));
    }
    Cqt { data, n_bins, hop_seconds: db.hop_seconds, bin_pitches: db.bin_pitches, scale: CqtScale::DbNormalized }
}
