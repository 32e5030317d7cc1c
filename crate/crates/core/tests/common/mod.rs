//! Generators and brute-force oracles shared by the integration tests and the acceptance
//! suite. Oracles are written directly from the definitions, without reusing the search,
//! DP or matching code under test.
#![allow(dead_code)]

use std::cmp::Ordering;

use maestro_core::audio::{Cqt, CqtScale};
use maestro_core::dataset::{ManifestRecord, Split};
use maestro_core::midi::{Note, NoteSequence};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------------------
// Segmentation

/// Generated session: pieces separated by long silences, with short decoy silences inside.
pub struct SegmentInstance {
    pub ns: NoteSequence,
    /// Every silence of at least `min_silence`, as `(start, end)` in time order.
    pub silences: Vec<(f64, f64)>,
    /// True piece boundaries `(first onset, last offset)`.
    pub pieces: Vec<(f64, f64)>,
    pub durations: Vec<f64>,
}

/// Densely overlapping notes covering exactly `[a, b]`.
fn fill_block(rng: &mut ChaCha8Rng, a: f64, b: f64, notes: &mut Vec<Note>) {
    let mut t = a;
    while t < b {
        let step = rng.gen_range(0.2..0.8);
        let off = if t + step >= b { b } else { (t + step + 0.3).min(b) };
        notes.push(Note::new(rng.gen_range(40..90), t, off, rng.gen_range(20..120)).unwrap());
        t += step;
    }
}

/// At most 4 pieces with up to 2 decoys each, so at most 11 silences. Durations are whole
/// seconds so that partial sums are exact.
pub fn segment_instance(rng: &mut ChaCha8Rng) -> SegmentInstance {
    let n_pieces = rng.gen_range(1..=4);
    let mut notes = Vec::new();
    let mut silences = Vec::new();
    let mut pieces = Vec::new();
    let mut t = rng.gen_range(0.5..3.0);
    for k in 0..n_pieces {
        if k > 0 {
            let gap = rng.gen_range(8.0..20.0);
            silences.push((t, t + gap));
            t += gap;
        }
        let start = t;
        let n_blocks = rng.gen_range(1..=3);
        for b in 0..n_blocks {
            if b > 0 {
                let gap = rng.gen_range(3.2..9.5);
                silences.push((t, t + gap));
                t += gap;
            }
            let len = rng.gen_range(15.0..60.0);
            fill_block(rng, t, t + len, &mut notes);
            t += len;
        }
        pieces.push((start, t));
    }
    let total = t + 1.0;
    // Expected durations follow the true cuts at inter-piece silence midpoints.
    let mut bounds = vec![pieces[0].0];
    bounds.extend(pieces.windows(2).map(|w| 0.5 * (w[0].1 + w[1].0)));
    bounds.push(t);
    let mut durations: Vec<f64> = bounds
        .windows(2)
        .map(|w| ((w[1] - w[0]) * (1.0 + rng.gen_range(-0.06..0.06))).round().max(1.0))
        .collect();
    // Some instances are deliberately off: a wildly wrong duration or a missing piece.
    match rng.gen_range(0..8) {
        0 => {
            let i = rng.gen_range(0..durations.len());
            durations[i] = (durations[i] * 1.6).round();
        }
        1 if durations.len() > 1 => {
            let last = durations.pop().unwrap();
            *durations.last_mut().unwrap() += last;
        }
        _ => {}
    }
    SegmentInstance { ns: NoteSequence::new(notes, vec![], total), silences, pieces, durations }
}

#[derive(Debug, Clone, Copy)]
enum Decision {
    Split { score: f64, p: usize },
    Skip,
}

fn cmp_decision(a: &Decision, b: &Decision) -> Ordering {
    match (a, b) {
        (Decision::Split { score: s1, p: p1 }, Decision::Split { score: s2, p: p2 }) => {
            s1.total_cmp(s2).then(p1.cmp(p2))
        }
        (Decision::Split { .. }, Decision::Skip) => Ordering::Less,
        (Decision::Skip, Decision::Split { .. }) => Ordering::Greater,
        (Decision::Skip, Decision::Skip) => Ordering::Equal,
    }
}

fn within(sum: f64, len: f64, tol: f64) -> bool {
    (sum - len).abs() <= tol * len
}

/// Best plan by exhaustive enumeration of cut subsets.
///
/// A subset is feasible when each resulting interval matches its single duration within
/// `tol`. It is reachable by a longest-silence-first search when every silence visited
/// before the last cut is either cut or skippable (shorter than `skip_below`, or inside an
/// interval already holding one piece). Among reachable subsets the winner has the
/// lexicographically smallest decision sequence, where a split ranks by (evenness, prefix
/// length) and every split ranks before a skip.
pub fn brute_force_segmentation(
    span: (f64, f64),
    silences: &[(f64, f64)],
    durations: &[f64],
    tol: f64,
    skip_below: f64,
) -> Option<Vec<(f64, f64)>> {
    let n = durations.len();
    let total: f64 = durations.iter().sum();
    if !within(total, span.1 - span.0, tol) {
        return None;
    }
    let mut order: Vec<(f64, f64)> = silences.to_vec();
    order.sort_by(|a, b| (b.1 - b.0).total_cmp(&(a.1 - a.0)).then(a.0.total_cmp(&b.0)));
    let k = order.len();
    let mut best: Option<(Vec<Decision>, Vec<(f64, f64)>)> = None;
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut cuts: Vec<f64> =
            (0..k).filter(|b| mask >> b & 1 == 1).map(|b| 0.5 * (order[b].0 + order[b].1)).collect();
        cuts.sort_by(f64::total_cmp);
        let mut bounds = vec![span.0];
        bounds.extend(&cuts);
        bounds.push(span.1);
        let intervals: Vec<(f64, f64)> = bounds.windows(2).map(|w| (w[0], w[1])).collect();
        if !intervals.iter().zip(durations).all(|(&(a, b), &d)| within(d, b - a, tol)) {
            continue;
        }
        let Some(decisions) = simulate(&order, mask, &cuts, span, durations, tol, skip_below) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((d, _)) => {
                decisions.iter().zip(d).map(|(a, b)| cmp_decision(a, b)).find(|o| o.is_ne()) == Some(Ordering::Less)
            }
        };
        if better {
            best = Some((decisions, intervals));
        }
    }
    best.map(|(_, iv)| iv)
}

fn simulate(
    order: &[(f64, f64)],
    mask: u32,
    cuts: &[f64],
    span: (f64, f64),
    durations: &[f64],
    tol: f64,
    skip_below: f64,
) -> Option<Vec<Decision>> {
    let last = (0..order.len()).filter(|b| mask >> b & 1 == 1).max();
    let Some(last) = last else { return Some(Vec::new()) };
    // (start, end, lo, hi) with durations[lo..hi] assigned.
    let mut state = vec![(span.0, span.1, 0usize, durations.len())];
    let mut decisions = Vec::new();
    for (b, s) in order.iter().enumerate().take(last + 1) {
        let c = 0.5 * (s.0 + s.1);
        let idx = state.iter().position(|iv| iv.0 < c && c < iv.1)?;
        let (a, e, lo, hi) = state[idx];
        if mask >> b & 1 == 1 {
            let p = cuts.iter().filter(|&&x| x < c).count() + 1;
            let (sa, sb): (f64, f64) = (durations[lo..p].iter().sum(), durations[p..hi].iter().sum());
            let (la, lb) = (c - a, e - c);
            if p <= lo || p >= hi || !within(sa, la, tol) || !within(sb, lb, tol) {
                return None;
            }
            decisions.push(Decision::Split { score: (sa / la - sb / lb).abs(), p });
            state.splice(idx..=idx, [(a, c, lo, p), (c, e, p, hi)]);
        } else {
            if hi - lo > 1 && s.1 - s.0 >= skip_below {
                return None;
            }
            decisions.push(Decision::Skip);
        }
    }
    Some(decisions)
}

// ---------------------------------------------------------------------------------------
// DTW

/// Frame-major matrix with `frames` columns of `dim` small non-negative integers, so that
/// equal distances (and therefore ties) are common.
pub fn integer_features(rng: &mut ChaCha8Rng, frames: usize, dim: usize, max: u32) -> Cqt<f64> {
    let data = (0..frames * dim).map(|_| f64::from(rng.gen_range(0..=max))).collect();
    Cqt::from_columns(data, dim, 0.01, CqtScale::Linear)
}

/// Exhaustive DTW over the full matrix `dist[i][j]`, with cells where `allowed` is false
/// unreachable. Diagonal steps cost `d`, the others `d + penalty`; ties prefer diagonal,
/// then vertical, then horizontal.
pub fn full_dtw(dist: &[Vec<f64>], penalty: f64, allowed: impl Fn(usize, usize) -> bool) -> Option<(f64, Vec<(usize, usize)>)> {
    let (n, m) = (dist.len(), dist[0].len());
    let inf = f64::INFINITY;
    let mut acc = vec![vec![inf; m]; n];
    let mut from = vec![vec![0u8; m]; n];
    for i in 0..n {
        for j in 0..m {
            if !allowed(i, j) {
                continue;
            }
            let d = dist[i][j];
            if i == 0 && j == 0 {
                acc[0][0] = d;
                continue;
            }
            let candidates = [
                if i > 0 && j > 0 { acc[i - 1][j - 1] + d } else { inf },
                if i > 0 { acc[i - 1][j] + (d + penalty) } else { inf },
                if j > 0 { acc[i][j - 1] + (d + penalty) } else { inf },
            ];
            let mut k = 0;
            for c in 1..3 {
                if candidates[c] < candidates[k] {
                    k = c;
                }
            }
            acc[i][j] = candidates[k];
            from[i][j] = k as u8;
        }
    }
    if !acc[n - 1][m - 1].is_finite() {
        return None;
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while (i, j) != (0, 0) {
        match from[i][j] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
        path.push((i, j));
    }
    path.reverse();
    Some((acc[n - 1][m - 1], path))
}

/// Exact mean cosine distance over all column pairs and the standard error of an `n`-sample
/// mean drawn uniformly with replacement.
pub fn exact_pair_mean(dist: &[Vec<f64>], n: usize) -> (f64, f64) {
    let all: Vec<f64> = dist.iter().flatten().copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / all.len() as f64;
    (mean, (var / n as f64).sqrt())
}

// ---------------------------------------------------------------------------------------
// Metrics

/// Largest matching size by trying every injective assignment.
pub fn exhaustive_matching_size(n_ref: usize, n_est: usize, ok: &dyn Fn(usize, usize) -> bool) -> usize {
    fn go(i: usize, n_ref: usize, n_est: usize, used: &mut Vec<bool>, ok: &dyn Fn(usize, usize) -> bool) -> usize {
        if i == n_ref {
            return 0;
        }
        let mut best = go(i + 1, n_ref, n_est, used, ok);
        for j in 0..n_est {
            if !used[j] && ok(i, j) {
                used[j] = true;
                best = best.max(1 + go(i + 1, n_ref, n_est, used, ok));
                used[j] = false;
            }
        }
        best
    }
    go(0, n_ref, n_est, &mut vec![false; n_est], ok)
}

/// Small reference/estimate pair with crowded pitches and times near the tolerances.
pub fn matching_instance(rng: &mut ChaCha8Rng) -> (NoteSequence, NoteSequence) {
    let n_ref = rng.gen_range(0..=6);
    let n_est = rng.gen_range(0..=6);
    let random_note = |rng: &mut ChaCha8Rng| {
        let on = rng.gen_range(0.0..0.4);
        Note::new(rng.gen_range(60..=62), on, on + rng.gen_range(0.05..0.5), rng.gen_range(1..=127)).unwrap()
    };
    let reference: Vec<Note> = (0..n_ref).map(|_| random_note(rng)).collect();
    let estimate: Vec<Note> = (0..n_est)
        .map(|k| {
            if k < reference.len() && rng.gen_bool(0.7) {
                let r = reference[k];
                let on = (r.onset + rng.gen_range(-0.07..0.07)).max(0.0);
                let off = (r.offset + rng.gen_range(-0.12..0.12)).max(on + 0.01);
                let vel = (i32::from(r.velocity) + rng.gen_range(-30..=30)).clamp(1, 127) as u8;
                Note::new(r.pitch, on, off, vel).unwrap()
            } else {
                random_note(rng)
            }
        })
        .collect();
    (NoteSequence::from_notes(reference), NoteSequence::from_notes(estimate))
}

/// Onset, onset+offset and velocity predicates written from the metric definitions.
pub fn onset_ok(r: &Note, e: &Note, tol: f64) -> bool {
    r.pitch == e.pitch && round7((r.onset - e.onset).abs()) <= tol
}

pub fn offset_ok(r: &Note, e: &Note, ratio: f64, min_tol: f64) -> bool {
    round7((r.offset - e.offset).abs()) <= min_tol.max(ratio * (r.offset - r.onset))
}

fn round7(x: f64) -> f64 {
    (x * 1e7).round() / 1e7
}

// ---------------------------------------------------------------------------------------
// Rolls and labels

pub fn random_piano_notes(rng: &mut ChaCha8Rng, n: usize, total: f64) -> NoteSequence {
    let notes = (0..n)
        .map(|_| {
            let on = rng.gen_range(0.0..total - 0.5);
            Note::new(rng.gen_range(21..=108), on, on + rng.gen_range(0.001..0.5), rng.gen_range(1..=127)).unwrap()
        })
        .collect();
    NoteSequence::new(notes, vec![], total)
}

/// `label[key][frame]` computed cell by cell: is any note of this key active, starting, or
/// within 8 frames of its end frame at this frame?
pub fn label_oracle(ns: &NoteSequence, rate: f64, n_frames: usize) -> [Vec<Vec<bool>>; 3] {
    let mut out = [vec![vec![false; n_frames]; 88], vec![vec![false; n_frames]; 88], vec![vec![false; n_frames]; 88]];
    for key in 0..88 {
        for f in 0..n_frames {
            for n in ns.notes().iter().filter(|n| usize::from(n.pitch) - 21 == key) {
                let on = (n.onset * rate).floor() as i64;
                let end = (n.offset * rate).ceil() as i64;
                let off = (n.offset * rate).floor() as i64;
                let f = f as i64;
                out[0][key][f as usize] |= f == on;
                out[1][key][f as usize] |= on <= f && f < end;
                out[2][key][f as usize] |= off <= f && f < off + 8;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------------------
// Manifests

/// Random manifest with `n_compositions` compositions spread over a handful of composers.
/// Repeat performances spell the title differently. Returns the records and each record's
/// true composition id.
pub fn random_manifest(rng: &mut ChaCha8Rng, n_compositions: usize) -> (Vec<ManifestRecord>, Vec<usize>) {
    let composers = ["Frédéric Chopin", "Franz Liszt", "J. S. Bach", "Ludwig van Beethoven", "Franz Schubert", "Maurice Ravel", "Sergei Rachmaninoff"];
    let forms = ["Sonata", "Etude", "Ballade", "Prelude and Fugue", "Nocturne", "Impromptu"];
    let mut records = Vec::new();
    let mut ids = Vec::new();
    for c in 0..n_compositions {
        let composer = composers.choose(rng).unwrap();
        let title = format!("{} No. {} in C, Op. {}", forms.choose(rng).unwrap(), c + 1, 100 + c);
        let performances = if rng.gen_bool(0.08) { rng.gen_range(5..=7) } else { rng.gen_range(1..=3) };
        for p in 0..performances {
            let spelled = match p % 3 {
                0 => title.clone(),
                1 => title.to_uppercase(),
                _ => title.replace("No. ", "no").replace(", Op. ", " op "),
            };
            let year = 2004 + rng.gen_range(0..15);
            records.push(ManifestRecord {
                composer: if p % 2 == 0 { composer.to_string() } else { composer.to_lowercase() },
                title: spelled,
                split: Split::Unassigned,
                year,
                midi_path: format!("{year}/perf_{c:04}_{p}.midi"),
                audio_path: format!("{year}/perf_{c:04}_{p}.wav"),
                duration: rng.gen_range(120.0..1500.0),
            });
            ids.push(c);
        }
    }
    (records, ids)
}

/// Largest gap between the empirical CDF of `samples` and the uniform CDF on `[0, 1]`.
pub fn ks_uniform(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / n).abs().max(((i + 1) as f64 / n - u).abs()))
        .fold(0.0, f64::max)
}
