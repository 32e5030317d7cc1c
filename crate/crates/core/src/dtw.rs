//! Fine alignment: banded dynamic time warping between high-resolution CQTs of a recording
//! and of its synthesized MIDI, and application of the resulting warp to MIDI times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{cqt, resample_mono, synthesize, to_db, AudioBuffer, AudioError, Cqt, CqtParams, DB_FLOOR};
use crate::midi::{Note, NoteSequence, PedalEvent};
use crate::scalar::{dot, Real};

/// Zero-pads the shorter buffer at the end so both have the same number of frames.
pub fn pad_to_equal<T: Real>(a: &AudioBuffer<T>, b: &AudioBuffer<T>) -> (AudioBuffer<T>, AudioBuffer<T>) {
    AudioBuffer::pad_to_equal(a, b)
}

#[derive(Debug, Error)]
pub enum DtwError {
    #[error("DTW inputs must be non-empty")]
    Empty,
    #[error("feature dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("no monotone path fits inside a band of {band} frames for {n}x{m} frames")]
    NoFeasiblePath { n: usize, m: usize, band: usize },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwConfig {
    pub sample_rate: u32,
    pub hop: usize,
    /// Sakoe-Chiba band radius, seconds.
    pub band_radius: f64,
    pub penalty_samples: usize,
    pub rng_seed: u64,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig { sample_rate: 22050, hop: 64, band_radius: 2.5, penalty_samples: 100_000, rng_seed: 0 }
    }
}

impl DtwConfig {
    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }

    pub fn band_frames(&self) -> usize {
        (self.band_radius / self.hop_seconds()).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpPath {
    /// `(audio frame, midi frame)` pairs from `(0, 0)` to `(N - 1, M - 1)`.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
    /// Number of cells held by the band's traceback table.
    pub cells_allocated: usize,
}

impl WarpPath {
    /// Endpoints and unit monotone steps.
    pub fn is_valid(&self, n: usize, m: usize) -> bool {
        self.pairs.first() == Some(&(0, 0))
            && self.pairs.last() == Some(&(n - 1, m - 1))
            && self.pairs.windows(2).all(|w| {
                let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
                matches!((di, dj), (1, 1) | (1, 0) | (0, 1))
            })
    }
}

/// `1 - u.v / (|u| |v|)`, or 1 when either vector is zero.
pub fn cosine_distance<T: Real>(u: &[T], v: &[T]) -> f64 {
    let nu = dot(u, u).to_f64_lossy().sqrt();
    let nv = dot(v, v).to_f64_lossy().sqrt();
    distance_with_norms(u, v, nu, nv)
}

fn distance_with_norms<T: Real>(u: &[T], v: &[T], nu: f64, nv: f64) -> f64 {
    if nu == 0.0 || nv == 0.0 {
        return 1.0;
    }
    1.0 - dot(u, v).to_f64_lossy() / (nu * nv)
}

/// Mean cosine distance over `n` uniformly sampled column pairs, used as the penalty for
/// non-diagonal steps.
pub fn estimate_penalty<T: Real>(x: &Cqt<T>, y: &Cqt<T>, n: usize, seed: u64) -> f64 {
    assert!(n >= 1 && x.n_frames() > 0 && y.n_frames() > 0, "need samples and non-empty inputs");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> =
        (0..n).map(|_| (rng.gen_range(0..x.n_frames()), rng.gen_range(0..y.n_frames()))).collect();
    let total: f64 = pairs.iter().map(|&(i, j)| cosine_distance(x.column(i), y.column(j))).sum();
    total / n as f64
}

/// Column range `[lo, hi]` of row `i` inside the band `|i*M - j*N| <= band*N`.
fn band_row(i: usize, n: usize, m: usize, band: usize) -> Option<(usize, usize)> {
    let (i, n, m, b) = (i as i128, n as i128, m as i128, band as i128);
    let lo = (i * m - b * n + n - 1).div_euclid(n).max(0);
    let hi = (i * m + b * n).div_euclid(n).min(m - 1);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

const DIAG: u8 = 0;
const VERT: u8 = 1;
const HORIZ: u8 = 2;
const ROW_BLOCK: usize = 256;

/// [`dtw_with_band`] with the band width derived from the configured radius.
pub fn dtw_banded<T: Real>(x: &Cqt<T>, y: &Cqt<T>, cfg: &DtwConfig, penalty: f64) -> Result<WarpPath, DtwError> {
    dtw_with_band(x, y, cfg.band_frames(), penalty)
}

/// Minimum-cost monotone alignment of the columns of `x` (rows `i`) and `y` (columns `j`)
/// restricted to `|i*M/N - j| <= band`.
///
/// Diagonal steps cost `d(i, j)`; vertical and horizontal steps cost `d(i, j) + penalty`.
/// Ties prefer diagonal, then vertical, then horizontal. Only the band's traceback
/// directions are stored, so memory is `O(N * band)`.
pub fn dtw_with_band<T: Real>(x: &Cqt<T>, y: &Cqt<T>, band: usize, penalty: f64) -> Result<WarpPath, DtwError> {
    let (n, m) = (x.n_frames(), y.n_frames());
    if n == 0 || m == 0 {
        return Err(DtwError::Empty);
    }
    if x.n_bins() != y.n_bins() {
        return Err(DtwError::DimensionMismatch(x.n_bins(), y.n_bins()));
    }
    let infeasible = || DtwError::NoFeasiblePath { n, m, band };
    let rows: Vec<(usize, usize)> = (0..n).map(|i| band_row(i, n, m, band)).collect::<Option<_>>().ok_or_else(infeasible)?;
    if rows[0].0 != 0 || rows[n - 1].1 != m - 1 {
        return Err(infeasible());
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0usize);
    for &(lo, hi) in &rows {
        offsets.push(offsets.last().unwrap() + hi - lo + 1);
    }
    let cells = offsets[n];
    let mut dirs = vec![DIAG; cells];

    let x_norms: Vec<f64> = (0..n).map(|i| dot(x.column(i), x.column(i)).to_f64_lossy().sqrt()).collect();
    let y_norms: Vec<f64> = (0..m).map(|j| dot(y.column(j), y.column(j)).to_f64_lossy().sqrt()).collect();

    let width = rows.iter().map(|&(lo, hi)| hi - lo + 1).max().unwrap();
    let mut prev = vec![f64::INFINITY; width];
    let mut cur = vec![f64::INFINITY; width];
    let mut prev_range = (1usize, 0usize);
    let mut dist = vec![0.0f64; ROW_BLOCK.min(n) * width];

    for block_start in (0..n).step_by(ROW_BLOCK) {
        let block_end = (block_start + ROW_BLOCK).min(n);
        dist.par_chunks_mut(width).take(block_end - block_start).enumerate().for_each(|(r, out)| {
            let i = block_start + r;
            let (lo, hi) = rows[i];
            for (slot, j) in out.iter_mut().zip(lo..=hi) {
                *slot = distance_with_norms(x.column(i), y.column(j), x_norms[i], y_norms[j]);
            }
        });
        for i in block_start..block_end {
            let (lo, hi) = rows[i];
            let d_row = &dist[(i - block_start) * width..];
            let row_dirs = &mut dirs[offsets[i]..offsets[i + 1]];
            let prev_at = |j: usize| -> f64 {
                if j >= prev_range.0 && j <= prev_range.1 {
                    prev[j - prev_range.0]
                } else {
                    f64::INFINITY
                }
            };
            for j in lo..=hi {
                let d = d_row[j - lo];
                if i == 0 && j == 0 {
                    cur[0] = d;
                    continue;
                }
                let diag = if j > 0 { prev_at(j - 1) + d } else { f64::INFINITY };
                let vert = prev_at(j) + (d + penalty);
                let horiz = if j > lo { cur[j - 1 - lo] + (d + penalty) } else { f64::INFINITY };
                let (mut best, mut dir) = (diag, DIAG);
                if vert < best {
                    best = vert;
                    dir = VERT;
                }
                if horiz < best {
                    best = horiz;
                    dir = HORIZ;
                }
                cur[j - lo] = best;
                row_dirs[j - lo] = dir;
            }
            std::mem::swap(&mut prev, &mut cur);
            prev_range = (lo, hi);
        }
    }
    let total_cost = prev[m - 1 - rows[n - 1].0];
    if !total_cost.is_finite() {
        return Err(infeasible());
    }

    let mut pairs = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    pairs.push((i, j));
    while (i, j) != (0, 0) {
        match dirs[offsets[i] + j - rows[i].0] {
            DIAG => {
                i -= 1;
                j -= 1;
            }
            VERT => i -= 1,
            _ => j -= 1,
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(WarpPath { pairs, total_cost, cells_allocated: cells })
}

/// Piecewise-linear map from MIDI time to audio time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpMap {
    /// `(midi_time, audio_time)` knots with strictly increasing MIDI times.
    pub knots: Vec<(f64, f64)>,
}

impl WarpMap {
    pub fn identity() -> Self {
        WarpMap { knots: vec![(0.0, 0.0), (1.0, 1.0)] }
    }

    pub fn map(&self, t: f64) -> f64 {
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].1;
        }
        // Clamped at the end knots.
        if t <= k[0].0 {
            return k[0].1;
        }
        if t >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let idx = k.partition_point(|p| p.0 <= t);
        let (a, b) = (k[idx - 1], k[idx]);
        a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
    }

    /// Two whitespace-separated columns, `midi_time audio_time`, one knot per line.
    pub fn to_text(&self) -> String {
        self.knots.iter().map(|(m, a)| format!("{m:.6} {a:.6}\n")).collect()
    }
}

/// Knots at every MIDI frame, each mapped to the median audio frame paired with it.
pub fn warp_map(path: &WarpPath, hop_seconds: f64) -> WarpMap {
    let mut knots = Vec::new();
    let mut start = 0;
    while start < path.pairs.len() {
        let j = path.pairs[start].1;
        let mut end = start;
        while end < path.pairs.len() && path.pairs[end].1 == j {
            end += 1;
        }
        // Pairs sharing j are consecutive with increasing i.
        let count = end - start;
        let median = if count % 2 == 1 {
            path.pairs[start + count / 2].0 as f64
        } else {
            0.5 * (path.pairs[start + count / 2 - 1].0 + path.pairs[start + count / 2].0) as f64
        };
        knots.push((j as f64 * hop_seconds, median * hop_seconds));
        start = end;
    }
    WarpMap { knots }
}

/// Minimum note length after warping, seconds.
const MIN_WARPED_DURATION: f64 = 0.001;

/// Maps every note and pedal time through `map`.
pub fn apply_warp(ns: &NoteSequence, map: &WarpMap) -> NoteSequence {
    let notes = ns
        .notes()
        .iter()
        .map(|n| {
            let onset = map.map(n.onset);
            Note { onset, offset: map.map(n.offset).max(onset + MIN_WARPED_DURATION), ..*n }
        })
        .collect();
    let pedals = ns.pedal_events().iter().map(|p| PedalEvent { time: map.map(p.time), ..*p }).collect();
    NoteSequence::new(notes, pedals, map.map(ns.total_time()))
}

/// Per-frame features for fine alignment: dB magnitudes shifted to be non-negative.
pub fn fine_features<T: Real>(audio: &AudioBuffer<T>, cfg: &DtwConfig) -> Result<Cqt<T>, DtwError> {
    let c = cqt(audio, CqtParams::with_hop(cfg.hop))?;
    Ok(to_db(&c).map(|v| v - T::from_f64_lossy(DB_FLOOR)))
}

#[derive(Debug, Clone)]
pub struct FineAlignment {
    pub midi: NoteSequence,
    pub path: WarpPath,
    pub map: WarpMap,
    pub penalty: f64,
}

/// Warps `midi` onto the timing of `audio`.
pub fn fine_align<T: Real>(audio: &AudioBuffer<T>, midi: &NoteSequence, cfg: &DtwConfig) -> Result<FineAlignment, DtwError> {
    // The signals are dropped before the DP so the traceback table dominates peak memory.
    let (x, y) = {
        let audio = if audio.sample_rate() == cfg.sample_rate && audio.channels() == 1 {
            audio.clone()
        } else {
            resample_mono(audio, cfg.sample_rate)
        };
        let synth: AudioBuffer<T> = synthesize(midi, cfg.sample_rate);
        let (audio, synth) = pad_to_equal(&audio, &synth);
        (fine_features(&audio, cfg)?, fine_features(&synth, cfg)?)
    };
    let penalty = estimate_penalty(&x, &y, cfg.penalty_samples.max(1), cfg.rng_seed);
    let path = dtw_banded(&x, &y, cfg, penalty)?;
    let map = warp_map(&path, cfg.hop_seconds());
    Ok(FineAlignment { midi: apply_warp(midi, &map), path, map, penalty })
}
