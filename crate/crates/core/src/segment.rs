//! Slicing aligned pairs into individual pieces at MIDI silences.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::{find_silences, NoteSequence, Silence};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("invalid segmentation input: {0}")]
    InvalidInput(String),
    #[error("no segmentation satisfies the duration constraints ({nodes} search nodes)")]
    NoSegmentationFound { nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub piece_index: usize,
}

/// Intervals of the noted span, each assigned a contiguous run of expected durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub intervals: Vec<(f64, f64)>,
    /// Index ranges into the duration list, one per interval.
    pub assignment: Vec<(usize, usize)>,
    pub durations: Vec<f64>,
    pub tolerance: f64,
}

impl SegmentPlan {
    pub fn satisfies_tolerance(&self) -> bool {
        self.intervals.iter().zip(&self.assignment).all(|(&(s, e), &(lo, hi))| {
            within_tolerance(self.durations[lo..hi].iter().sum(), e - s, self.tolerance)
        })
    }

    /// One segment per interval; meaningful once every interval holds one duration.
    pub fn segments(&self) -> Vec<Segment> {
        self.intervals
            .iter()
            .zip(&self.assignment)
            .map(|(&(start, end), &(lo, _))| Segment { start, end, piece_index: lo })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedySegmentation {
    pub segments: Vec<Segment>,
    pub warning: Option<String>,
}

fn within_tolerance(sum: f64, len: f64, tolerance: f64) -> bool {
    (sum - len).abs() <= tolerance * len
}

fn noted_span(ns: &NoteSequence) -> Result<(f64, f64), SegmentError> {
    match (ns.first_onset(), ns.last_offset()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(SegmentError::InvalidInput("note sequence is empty".into())),
    }
}

/// Cuts at the midpoints of the `n_pieces - 1` longest silences.
pub fn greedy_segment(ns: &NoteSequence, n_pieces: usize) -> Result<GreedySegmentation, SegmentError> {
    if n_pieces == 0 {
        return Err(SegmentError::InvalidInput("n_pieces must be at least 1".into()));
    }
    let (first, last) = noted_span(ns)?;
    let silences = find_silences(ns, 0.0);
    let wanted = n_pieces - 1;
    let warning = (silences.len() < wanted).then(|| {
        format!("{n_pieces} pieces requested but only {} silences exist", silences.len())
    });
    let mut cuts: Vec<f64> = silences.iter().take(wanted).map(Silence::midpoint).collect();
    cuts.sort_by(f64::total_cmp);
    let mut bounds = vec![first];
    bounds.extend(cuts);
    bounds.push(last);
    let segments = bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| Segment { start: w[0], end: w[1], piece_index: i })
        .collect();
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(GreedySegmentation { segments, warning })
}

/// Density-difference heuristic ranking candidate splits; lower is more even.
pub fn evenness_score(interval_len_a: f64, interval_len_b: f64, sum_a: f64, sum_b: f64) -> f64 {
    (sum_a / interval_len_a - sum_b / interval_len_b).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktrackConfig {
    pub tolerance: f64,
    pub min_silence: f64,
    pub skip_silence_below: f64,
    pub max_nodes: usize,
}

impl Default for BacktrackConfig {
    fn default() -> Self {
        BacktrackConfig { tolerance: 0.15, min_silence: 3.0, skip_silence_below: 10.0, max_nodes: 2_000_000 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    start: f64,
    end: f64,
    lo: usize,
    hi: usize,
}

struct Search<'a> {
    silences: &'a [Silence],
    durations: &'a [f64],
    prefix: Vec<f64>,
    cfg: BacktrackConfig,
    nodes: usize,
}

impl Search<'_> {
    fn sum(&self, lo: usize, hi: usize) -> f64 {
        self.prefix[hi] - self.prefix[lo]
    }

    fn run(&mut self, k: usize, intervals: &mut Vec<Interval>) -> Option<Vec<Interval>> {
        self.nodes += 1;
        if intervals.iter().all(|iv| iv.hi - iv.lo == 1) {
            return Some(intervals.clone());
        }
        if k == self.silences.len() || self.nodes > self.cfg.max_nodes {
            return None;
        }
        let s = self.silences[k];
        let cut = s.midpoint();
        let idx = intervals.iter().position(|iv| iv.start < cut && cut < iv.end)?;
        let iv = intervals[idx];
        let mut splits: Vec<(f64, usize)> = (iv.lo + 1..iv.hi)
            .filter_map(|p| {
                let (la, lb) = (cut - iv.start, iv.end - cut);
                let (sa, sb) = (self.sum(iv.lo, p), self.sum(p, iv.hi));
                (within_tolerance(sa, la, self.cfg.tolerance) && within_tolerance(sb, lb, self.cfg.tolerance))
                    .then(|| (evenness_score(la, lb, sa, sb), p))
            })
            .collect();
        splits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, p) in splits {
            let left = Interval { end: cut, hi: p, ..iv };
            let right = Interval { start: cut, lo: p, ..iv };
            intervals.splice(idx..=idx, [left, right]);
            let found = self.run(k + 1, intervals);
            intervals.splice(idx..idx + 2, [iv]);
            if found.is_some() {
                return found;
            }
        }
        if iv.hi - iv.lo == 1 || s.duration() < self.cfg.skip_silence_below {
            return self.run(k + 1, intervals);
        }
        None
    }
}

/// Depth-first search assigning expected piece durations to the intervals between
/// silences, visiting silences longest first.
///
/// At each silence the interval containing it is split between every duration prefix and
/// suffix whose sums match both halves within tolerance, most even split first. Skipping
/// the silence is tried last, and only when it is shorter than `skip_silence_below` or
/// lies inside an interval that already holds a single piece.
pub fn backtracking_segment(
    ns: &NoteSequence,
    durations: &[f64],
    cfg: &BacktrackConfig,
) -> Result<SegmentPlan, SegmentError> {
    if durations.is_empty() || durations.iter().any(|d| !(*d > 0.0)) {
        return Err(SegmentError::InvalidInput("durations must be non-empty and positive".into()));
    }
    let (first, last) = noted_span(ns)?;
    let silences = find_silences(ns, cfg.min_silence);
    let mut prefix = vec![0.0];
    for d in durations {
        prefix.push(prefix.last().unwrap() + d);
    }
    let total = *prefix.last().unwrap();
    let mut search = Search { silences: &silences, durations, prefix, cfg: *cfg, nodes: 0 };
    let root = Interval { start: first, end: last, lo: 0, hi: durations.len() };
    let found = if within_tolerance(total, last - first, cfg.tolerance) {
        search.run(0, &mut vec![root])
    } else {
        None
    };
    let Some(intervals) = found else {
        return Err(SegmentError::NoSegmentationFound { nodes: search.nodes });
    };
    let plan = SegmentPlan {
        intervals: intervals.iter().map(|iv| (iv.start, iv.end)).collect(),
        assignment: intervals.iter().map(|iv| (iv.lo, iv.hi)).collect(),
        durations: search.durations.to_vec(),
        tolerance: cfg.tolerance,
    };
    assert!(plan.satisfies_tolerance(), "search returned a plan violating its tolerance");
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinalizeConfig {
    pub padding: f64,
    pub edge_cluster_max_notes: usize,
    pub edge_silence: f64,
}

impl Default for FinalizeConfig {
    fn default() -> Self {
        FinalizeConfig { padding: 1.0, edge_cluster_max_notes: 5, edge_silence: 3.0 }
    }
}

/// Note extent of a segment after dropping small edge clusters; `None` if it has no notes.
fn body_extent(ns: &NoteSequence, seg: &Segment, cfg: &FinalizeConfig) -> Option<(f64, f64)> {
    let notes: Vec<_> = ns.notes().iter().filter(|n| n.onset >= seg.start && n.onset < seg.end).collect();
    // Clusters as (first onset, last offset, note count), split at gaps >= edge_silence.
    let mut clusters: Vec<(f64, f64, usize)> = Vec::new();
    for n in notes {
        match clusters.last_mut() {
            Some(c) if n.onset - c.1 < cfg.edge_silence => {
                c.1 = c.1.max(n.offset);
                c.2 += 1;
            }
            _ => clusters.push((n.onset, n.offset, 1)),
        }
    }
    let (mut lo, mut hi) = (0, clusters.len());
    while hi - lo > 1 && clusters[lo].2 <= cfg.edge_cluster_max_notes {
        lo += 1;
    }
    while hi - lo > 1 && clusters[hi - 1].2 <= cfg.edge_cluster_max_notes {
        hi -= 1;
    }
    (hi > lo).then(|| (clusters[lo].0, clusters[hi - 1].1))
}

/// Trims stray edge clusters and pads each segment, resolving padding collisions at the
/// midpoint between neighbouring bodies.
pub fn finalize_segments(ns: &NoteSequence, segments: &[Segment], cfg: &FinalizeConfig) -> Vec<Segment> {
    let total = ns.total_time();
    let mut sorted = segments.to_vec();
    sorted.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap_or(Ordering::Equal));
    let bodies: Vec<(f64, f64)> =
        sorted.iter().map(|s| body_extent(ns, s, cfg).unwrap_or((s.start, s.end))).collect();
    let mut out: Vec<Segment> = sorted
        .iter()
        .zip(&bodies)
        .map(|(s, &(a, b))| Segment {
            start: (a - cfg.padding).max(0.0),
            end: (b + cfg.padding).min(total),
            piece_index: s.piece_index,
        })
        .collect();
    for i in 1..out.len() {
        if out[i - 1].end > out[i].start {
            let mid = 0.5 * (bodies[i - 1].1 + bodies[i].0);
            out[i - 1].end = mid;
            out[i].start = mid;
        }
    }
    out
}
