//! Transcription scores: frame metrics and onset, onset+offset and onset+offset+velocity
//! note metrics, aggregated as per-piece means.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::midi::{Note, NoteSequence};

/// Distances are rounded to this many decimals before tolerance checks.
const DISTANCE_DECIMALS: i32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub onset_tolerance: f64,
    pub offset_ratio: f64,
    pub offset_min_tolerance: f64,
    pub velocity_tolerance: f64,
    pub frame_size: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            onset_tolerance: 0.05,
            offset_ratio: 0.2,
            offset_min_tolerance: 0.05,
            velocity_tolerance: 0.1,
            frame_size: 0.032,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Note,
    NoteWithOffset,
    NoteWithOffsetVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(matched: usize, n_ref: usize, n_est: usize) -> Prf {
        let precision = if n_est == 0 { 0.0 } else { matched as f64 / n_est as f64 };
        let recall = if n_ref == 0 { 0.0 } else { matched as f64 / n_ref as f64 };
        Prf { precision, recall, f1: f1(precision, recall) }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalScores {
    pub frame: Prf,
    pub note: Prf,
    pub note_with_offset: Prf,
    pub note_with_offset_velocity: Prf,
}

impl EvalScores {
    pub fn families(&self) -> [(&'static str, Prf); 4] {
        [
            ("frame", self.frame),
            ("note", self.note),
            ("note_with_offset", self.note_with_offset),
            ("note_with_offset_velocity", self.note_with_offset_velocity),
        ]
    }
}

impl fmt::Display for EvalScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<26} {:>9} {:>9} {:>9}", "family", "P", "R", "F1")?;
        for (name, s) in self.families() {
            writeln!(f, "{:<26} {:>9.4} {:>9.4} {:>9.4}", name, s.precision, s.recall, s.f1)?;
        }
        Ok(())
    }
}

/// Active (pitch, frame) cells of a sequence: frames `[floor(on / size), ceil(off / size))`.
pub fn active_cells(ns: &NoteSequence, frame_size: f64) -> Vec<Vec<bool>> {
    let n_frames = ns.notes().iter().map(|n| (n.offset / frame_size).ceil() as usize).max().unwrap_or(0);
    let mut roll = vec![vec![false; n_frames]; 128];
    for n in ns.notes() {
        let start = (n.onset / frame_size).floor() as usize;
        let end = (n.offset / frame_size).ceil() as usize;
        for cell in &mut roll[n.pitch as usize][start..end] {
            *cell = true;
        }
    }
    roll
}

/// Cell-wise precision and recall of two pitch-by-frame rolls; the shorter is padded with
/// inactive frames.
pub fn frame_scores(reference: &[Vec<bool>], estimate: &[Vec<bool>]) -> Prf {
    let rows = reference.len().max(estimate.len());
    let (mut tp, mut n_ref, mut n_est) = (0, 0, 0);
    for k in 0..rows {
        let r = reference.get(k).map(Vec::as_slice).unwrap_or(&[]);
        let e = estimate.get(k).map(Vec::as_slice).unwrap_or(&[]);
        for t in 0..r.len().max(e.len()) {
            let (a, b) = (r.get(t).copied().unwrap_or(false), e.get(t).copied().unwrap_or(false));
            tp += usize::from(a && b);
            n_ref += usize::from(a);
            n_est += usize::from(b);
        }
    }
    Prf::from_counts(tp, n_ref, n_est)
}

fn rounded(d: f64) -> f64 {
    let scale = 10f64.powi(DISTANCE_DECIMALS);
    (d * scale).round() / scale
}

/// Maximum bipartite matching by augmenting paths. Reference notes are processed in
/// order and candidates tried in index order, so the result is deterministic.
/// Returns `(ref index, est index)` pairs sorted by reference index.
pub fn maximum_matching(n_ref: usize, n_est: usize, matchable: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    let adj: Vec<Vec<usize>> = (0..n_ref).map(|i| (0..n_est).filter(|&j| matchable(i, j)).collect()).collect();
    match_adjacency(n_est, &adj)
}

/// Like [`maximum_matching`], but each reference tries its candidates closest first.
/// The matching size is unchanged; identical notes end up paired with each other.
fn maximum_matching_closest_first(
    n_ref: usize,
    n_est: usize,
    matchable: impl Fn(usize, usize) -> bool,
    distance: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    let adj: Vec<Vec<usize>> = (0..n_ref)
        .map(|i| {
            let mut c: Vec<usize> = (0..n_est).filter(|&j| matchable(i, j)).collect();
            c.sort_by(|&a, &b| distance(i, a).total_cmp(&distance(i, b)).then(a.cmp(&b)));
            c
        })
        .collect();
    match_adjacency(n_est, &adj)
}

fn match_adjacency(n_est: usize, adj: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let n_ref = adj.len();
    let mut est_owner: Vec<Option<usize>> = vec![None; n_est];
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, adj, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    for i in 0..n_ref {
        let mut seen = vec![false; n_est];
        augment(i, adj, &mut seen, &mut est_owner);
    }
    let mut pairs: Vec<(usize, usize)> =
        est_owner.iter().enumerate().filter_map(|(j, o)| o.map(|i| (i, j))).collect();
    pairs.sort_unstable();
    pairs
}

fn timing_matches(r: &Note, e: &Note, cfg: &MatchConfig, with_offset: bool) -> bool {
    if r.pitch != e.pitch || rounded((r.onset - e.onset).abs()) > cfg.onset_tolerance {
        return false;
    }
    if with_offset {
        let tolerance = cfg.offset_min_tolerance.max(cfg.offset_ratio * r.duration());
        if rounded((r.offset - e.offset).abs()) > tolerance {
            return false;
        }
    }
    true
}

/// Least-squares `(slope, intercept)` mapping `x` onto `y`; the minimum-norm solution when
/// `x` is constant.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        let denom = mx * mx + 1.0;
        return (mx * my / denom, my / denom);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Matched `(ref, est)` index pairs for one note family.
pub fn match_notes(reference: &NoteSequence, estimate: &NoteSequence, cfg: &MatchConfig, family: Family) -> Vec<(usize, usize)> {
    let (r, e) = (reference.notes(), estimate.notes());
    let with_offset = family != Family::Note;
    let distance = |i: usize, j: usize| {
        let d = (r[i].onset - e[j].onset).abs();
        if with_offset {
            d + (r[i].offset - e[j].offset).abs()
        } else {
            d
        }
    };
    let timing = maximum_matching_closest_first(
        r.len(),
        e.len(),
        |i, j| timing_matches(&r[i], &e[j], cfg, with_offset),
        distance,
    );
    if family != Family::NoteWithOffsetVelocity || timing.is_empty() {
        return timing;
    }
    // Reference velocities scaled to [0, 1]; estimates fitted to them on the timing matches.
    let rv: Vec<f64> = r.iter().map(|n| f64::from(n.velocity)).collect();
    let min = rv.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = rv.iter().map(|v| v - min).collect();
    let max = shifted.iter().copied().fold(0.0, f64::max);
    let ref_vel: Vec<f64> = shifted.iter().map(|v| if max > 0.0 { v / max } else { *v }).collect();
    let xs: Vec<f64> = timing.iter().map(|&(_, j)| f64::from(e[j].velocity)).collect();
    let ys: Vec<f64> = timing.iter().map(|&(i, _)| ref_vel[i]).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let est_vel: Vec<f64> = e.iter().map(|n| slope * f64::from(n.velocity) + intercept).collect();
    maximum_matching_closest_first(
        r.len(),
        e.len(),
        |i, j| timing_matches(&r[i], &e[j], cfg, true) && (ref_vel[i] - est_vel[j]).abs() <= cfg.velocity_tolerance,
        |i, j| distance(i, j) + (ref_vel[i] - est_vel[j]).abs(),
    )
}

pub fn note_scores(reference: &NoteSequence, estimate: &NoteSequence, cfg: &MatchConfig, family: Family) -> Prf {
    let matched = match_notes(reference, estimate, cfg, family).len();
    Prf::from_counts(matched, reference.len(), estimate.len())
}

/// All four families for one piece.
pub fn evaluate(reference: &NoteSequence, estimate: &NoteSequence, cfg: &MatchConfig) -> EvalScores {
    EvalScores {
        frame: frame_scores(&active_cells(reference, cfg.frame_size), &active_cells(estimate, cfg.frame_size)),
        note: note_scores(reference, estimate, cfg, Family::Note),
        note_with_offset: note_scores(reference, estimate, cfg, Family::NoteWithOffset),
        note_with_offset_velocity: note_scores(reference, estimate, cfg, Family::NoteWithOffsetVelocity),
    }
}

/// Field-wise mean over pieces.
pub fn aggregate(per_piece: &[EvalScores]) -> EvalScores {
    if per_piece.is_empty() {
        return EvalScores::default();
    }
    let n = per_piece.len() as f64;
    let mean = |get: fn(&EvalScores) -> Prf| {
        let (p, r, f) = per_piece.iter().map(get).fold((0.0, 0.0, 0.0), |a, s| (a.0 + s.precision, a.1 + s.recall, a.2 + s.f1));
        Prf { precision: p / n, recall: r / n, f1: f / n }
    };
    EvalScores {
        frame: mean(|s| s.frame),
        note: mean(|s| s.note),
        note_with_offset: mean(|s| s.note_with_offset),
        note_with_offset_velocity: mean(|s| s.note_with_offset_velocity),
    }
}
