//! Acceptance suite. Runs without the test harness so every criterion prints one line:
//! `PASS`, `FAIL` or (for checks needing external data) `SKIP`.
//!
//! Set `MAESTRO_V1_CSV` to the official v1 metadata CSV to check the published dataset
//! statistics, and `MAESTRO_V1_ROOT` to its directory to include note counts.

#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use maestro_core::audio::{synthesize, AudioBuffer, Cqt, CqtScale};
use maestro_core::coarse::{align_session, AlignmentConfig};
use maestro_core::dataset::{
    compute_stats, make_split, onset_roll, read_manifest, sample_augmentation, training_labels, verify_split,
    SplitAssignment, SplitConfig,
};
use maestro_core::dtw::{cosine_distance, dtw_with_band, estimate_penalty, fine_align, DtwConfig};
use maestro_core::eval::{aggregate, evaluate, match_notes, Family, MatchConfig, Prf};
use maestro_core::midi::{parse_smf, Note, NoteSequence};
use maestro_core::segment::{backtracking_segment, BacktrackConfig, SegmentError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOCATOR: Counting = Counting;

/// Bytes allocated at the peak of `f` beyond what was live when it started.
fn peak_during<R>(f: impl FnOnce() -> R) -> (R, usize) {
    let base = LIVE.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let r = f();
    (r, PEAK.load(Ordering::Relaxed) - base)
}

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn session_midi(rng: &mut ChaCha8Rng, total: f64) -> NoteSequence {
    let mut notes = Vec::new();
    let mut t = 1.0;
    while t < total - 1.0 {
        let piece_end = (t + rng.gen_range(120.0..300.0)).min(total - 1.0);
        while t < piece_end {
            let d = rng.gen_range(0.1..1.0);
            notes.push(Note::new(rng.gen_range(36..84), t, (t + d).min(total), rng.gen_range(30..120)).unwrap());
            t += rng.gen_range(0.05..0.5);
        }
        t += rng.gen_range(31.0..50.0);
    }
    NoteSequence::new(notes, vec![], total)
}

fn coarse_shift_recovery() -> Verdict {
    let cfg = AlignmentConfig::default();
    let hop = cfg.hop_seconds();
    let (mut hits, mut slowest) = (0, 0.0f64);
    let mut misses = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let offset = rng.gen_range(0.0..1200.0);
        let len = rng.gen_range(60.0..180.0);
        let tail = rng.gen_range(30.0..300.0);
        let midi = session_midi(&mut rng, offset + len + tail);
        let synth: AudioBuffer<f32> = synthesize(&midi, cfg.sample_rate);
        let clip = synth.slice_seconds(offset, offset + len);
        let noisy = AudioBuffer::mono(clip.samples().iter().map(|s| s + 0.02 * (rng.gen::<f32>() - 0.5)).collect(), clip.sample_rate());
        let start = Instant::now();
        let entries = align_session(&[("clip".to_string(), noisy)], &midi, &cfg);
        slowest = slowest.max(start.elapsed().as_secs_f64());
        match entries.ok().and_then(|e| e.into_iter().next()).and_then(|e| e.outcome.ok()) {
            Some(a) if (a.shift - offset).abs() <= hop => hits += 1,
            Some(a) => misses.push(format!("seed {seed}: {:.3} vs {offset:.3}", a.shift)),
            None => misses.push(format!("seed {seed}: not aligned")),
        }
    }
    check(hits >= 19 && slowest < 30.0, format!("{hits}/20 within one hop, slowest session {slowest:.1} s {misses:?}"))
}

fn fine_alignment_accuracy() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut notes = Vec::new();
    let mut t = 0.5;
    while t < 299.0 {
        notes.push(Note::new(rng.gen_range(36..84), t, t + rng.gen_range(0.1..0.8), rng.gen_range(40..110)).unwrap());
        t += rng.gen_range(0.08..0.4);
    }
    let score = NoteSequence::new(notes, vec![], 300.0);
    // Smooth jitter of up to 80 ms.
    let performed = score.map_times(|t| t + 0.08 * (2.0 * std::f64::consts::PI * t / 17.0 + 0.3).sin());
    let cfg = DtwConfig::default();
    let audio: AudioBuffer<f32> = synthesize(&performed, cfg.sample_rate);
    let start = Instant::now();
    let (fa, peak) = peak_during(|| fine_align(&audio, &score, &cfg));
    let elapsed = start.elapsed().as_secs_f64();
    let fa = match fa {
        Ok(fa) => fa,
        Err(e) => return Verdict::Fail(format!("{e}")),
    };
    let mut errors: Vec<f64> = fa.midi.notes().iter().zip(performed.notes()).map(|(a, b)| (a.onset - b.onset).abs()).collect();
    errors.sort_by(f64::total_cmp);
    let (median, max) = (errors[errors.len() / 2], errors[errors.len() - 1]);
    let n = fa.path.pairs.last().unwrap().0 + 1;
    let cells_bound = n * (2 * cfg.band_frames() + 1);
    check(
        median <= 0.009 && max <= 0.015 && elapsed < 60.0 && fa.path.cells_allocated <= cells_bound && peak <= 2 * cells_bound,
        format!(
            "median {:.2} ms, max {:.2} ms, {elapsed:.1} s, {} cells (bound {cells_bound}), peak {:.1} MB (bound {:.1} MB)",
            median * 1e3,
            max * 1e3,
            fa.path.cells_allocated,
            peak as f64 / 1e6,
            2.0 * cells_bound as f64 / 1e6
        ),
    )
}

fn dtw_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..200 {
        let (n, m) = (rng.gen_range(1..=40), rng.gen_range(1..=40));
        let x = common::integer_features(&mut rng, n, 3, 2);
        let y = common::integer_features(&mut rng, m, 3, 2);
        let dist: Vec<Vec<f64>> =
            (0..n).map(|i| (0..m).map(|j| cosine_distance(x.column(i), y.column(j))).collect()).collect();
        let got = dtw_with_band(&x, &y, n.max(m), 0.1).ok();
        let want = common::full_dtw(&dist, 0.1, |_, _| true);
        let same = matches!((&got, &want), (Some(g), Some((c, p))) if g.total_cost.to_bits() == c.to_bits() && &g.pairs == p);
        mismatches += usize::from(!same);
    }
    check(mismatches == 0, format!("{} of 200 pairs identical in cost and path", 200 - mismatches))
}

fn penalty_estimator() -> Verdict {
    let samples = 2000;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
        let (n, m) = (rng.gen_range(2..=20), rng.gen_range(2..=20));
        let data = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> { (0..k * 12).map(|_| rng.gen_range(0.0..80.0)).collect() };
        let x = Cqt::from_columns(data(&mut rng, n), 12, 0.01, CqtScale::Db);
        let y = Cqt::from_columns(data(&mut rng, m), 12, 0.01, CqtScale::Db);
        let exact: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let (u, v) = (x.column(i), y.column(j));
                        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
                        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                        1.0 - dot / (nu * nv)
                    })
                    .collect()
            })
            .collect();
        let (mean, se) = common::exact_pair_mean(&exact, samples);
        let est = estimate_penalty(&x, &y, samples, trial);
        worst = worst.max((est - mean).abs() / se);
    }
    check(worst <= 3.0, format!("worst deviation {worst:.2} standard errors over 50 trials"))
}

fn segmentation_oracle() -> Verdict {
    let cfg = BacktrackConfig { tolerance: 0.1, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut feasible, mut infeasible, mut wrong) = (0, 0, 0);
    for _ in 0..100 {
        let inst = common::segment_instance(&mut rng);
        let span = (inst.ns.first_onset().unwrap(), inst.ns.last_offset().unwrap());
        let oracle = common::brute_force_segmentation(span, &inst.silences, &inst.durations, cfg.tolerance, cfg.skip_silence_below);
        match (backtracking_segment(&inst.ns, &inst.durations, &cfg), oracle) {
            (Ok(plan), Some(expected)) if plan.satisfies_tolerance() && plan.intervals == expected => feasible += 1,
            (Err(SegmentError::NoSegmentationFound { .. }), None) => infeasible += 1,
            _ => wrong += 1,
        }
    }
    check(wrong == 0, format!("{feasible} feasible matched, {infeasible} infeasible rejected, {wrong} disagreements"))
}

fn split_constraints() -> Verdict {
    let cfg = SplitConfig::default();
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(30..150);
        let (records, ids) = common::random_manifest(&mut rng, n);
        let a = make_split(&records, &cfg, seed);
        let mut splits: BTreeMap<usize, BTreeSet<_>> = BTreeMap::new();
        let mut time = [0.0; 3];
        for (r, id) in records.iter().zip(&ids) {
            let s = a.get(r.performance_id());
            splits.entry(*id).or_default().insert(s);
            match s.index() {
                Some(i) => time[i] += r.duration,
                None => failures.push(format!("seed {seed}: unassigned")),
            }
        }
        if splits.values().any(|s| s.len() > 1) {
            failures.push(format!("seed {seed}: composition spans splits"));
        }
        let total: f64 = time.iter().sum();
        if time.iter().zip(cfg.targets).any(|(t, target)| (t / total - target).abs() > 0.03) {
            failures.push(format!("seed {seed}: proportions {:?}", time.map(|t| t / total)));
        }
    }
    check(failures.is_empty(), format!("100 manifests, {} failures {failures:?}", failures.len()))
}

fn published_statistics() -> Verdict {
    let Ok(csv) = std::env::var("MAESTRO_V1_CSV") else {
        return Verdict::Skip("MAESTRO_V1_CSV not set".into());
    };
    let records = match std::fs::File::open(&csv).map_err(|e| e.to_string()).and_then(|f| read_manifest(f).map_err(|e| e.to_string())) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(format!("{csv}: {e}")),
    };
    let assignment = SplitAssignment {
        assignments: records.iter().map(|r| (r.performance_id().to_string(), r.split)).collect(),
        warnings: Vec::new(),
    };
    let disjoint = verify_split(&assignment, &records, &SplitConfig::default()).hard_violations().count() == 0;
    let notes = std::env::var("MAESTRO_V1_ROOT").ok().map(|root| {
        records
            .iter()
            .filter_map(|r| {
                let bytes = std::fs::read(std::path::Path::new(&root).join(&r.midi_path)).ok()?;
                Some((r.performance_id().to_string(), parse_smf(&bytes).ok()?.len() as u64))
            })
            .collect::<BTreeMap<_, _>>()
    });
    let table = compute_stats(&records, notes.as_ref());
    let close = |a: f64, b: f64| (a - b).abs() <= 0.005 * b;
    let mut ok = disjoint;
    for (split, perf, hours, millions) in [("train", 954.0, 140.1, 5.06), ("validation", 105.0, 15.3, 0.54), ("test", 125.0, 16.9, 0.57)] {
        let Some(row) = table.row(split) else { return Verdict::Fail(format!("no {split} row")) };
        ok &= close(row.performances as f64, perf) && close(row.hours, hours);
        if let Some(n) = row.notes {
            ok &= close(n as f64 / 1e6, millions);
        }
    }
    check(ok, format!("disjoint {disjoint}\n{table}"))
}

fn onset_roll_frames() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let total = 120.0;
    let ns = common::random_piano_notes(&mut rng, 1000, total);
    let roll = match onset_roll::<f64>(&ns) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let shape_ok = roll.n_keys() == 88 && roll.n_frames() == (250.0f64 * total).ceil() as usize;
    let mut expected: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for n in ns.notes() {
        let e = expected.entry((usize::from(n.pitch) - 21, (250.0 * n.onset).floor() as usize)).or_insert(0.0);
        *e = e.max(f64::from(n.velocity) / 127.0);
    }
    let cells_ok = (0..88).all(|k| (0..roll.n_frames()).all(|f| roll.get(k, f) == expected.get(&(k, f)).copied().unwrap_or(0.0)));
    check(shape_ok && cells_ok, format!("shape {}x{}, {} onset cells", roll.n_keys(), roll.n_frames(), expected.len()))
}

fn offset_labels() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut bad = 0;
    for _ in 0..20 {
        let ns = common::random_piano_notes(&mut rng, 80, 6.0);
        let labels = match training_labels::<f32>(&ns, 250.0) {
            Ok(l) => l,
            Err(e) => return Verdict::Fail(e.to_string()),
        };
        let oracle = common::label_oracle(&ns, 250.0, labels.offset.n_frames());
        bad += (0..88)
            .flat_map(|k| (0..labels.offset.n_frames()).map(move |f| (k, f)))
            .filter(|&(k, f)| (labels.offset.get(k, f) == 1.0) != oracle[2][k][f])
            .count();
    }
    check(bad == 0, format!("{bad} offset cells differ from the per-frame oracle over 20 sequences"))
}

fn metrics_oracle() -> Verdict {
    let cfg = MatchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0;
    for _ in 0..500 {
        let (reference, estimate) = common::matching_instance(&mut rng);
        let (r, e) = (reference.notes(), estimate.notes());
        let on = |i: usize, j: usize| common::onset_ok(&r[i], &e[j], cfg.onset_tolerance);
        let on_off = |i: usize, j: usize| on(i, j) && common::offset_ok(&r[i], &e[j], cfg.offset_ratio, cfg.offset_min_tolerance);
        mismatches += usize::from(match_notes(&reference, &estimate, &cfg, Family::Note).len() != common::exhaustive_matching_size(r.len(), e.len(), &on));
        mismatches += usize::from(
            match_notes(&reference, &estimate, &cfg, Family::NoteWithOffset).len() != common::exhaustive_matching_size(r.len(), e.len(), &on_off),
        );
        let velocity = match_notes(&reference, &estimate, &cfg, Family::NoteWithOffsetVelocity);
        mismatches += usize::from(!velocity.iter().all(|&(i, j)| on_off(i, j)));
    }
    let mut imperfect = 0;
    for _ in 0..100 {
        let (reference, _) = common::matching_instance(&mut rng);
        if !reference.is_empty() {
            let s = evaluate(&reference, &reference, &cfg);
            imperfect += s.families().iter().filter(|(_, p)| *p != Prf { precision: 1.0, recall: 1.0, f1: 1.0 }).count();
        }
    }
    // One perfect single-note piece and one ten-note piece with a single hit: the per-piece
    // mean F1 is 0.55, where pooled counts would give 2/11.
    let one = NoteSequence::from_notes(vec![Note::new(60, 0.0, 0.5, 80).unwrap()]);
    let ten: Vec<Note> = (0..10).map(|k| Note::new(60 + k, f64::from(k), f64::from(k) + 0.5, 80).unwrap()).collect();
    let ten_est: Vec<Note> = ten.iter().enumerate().map(|(k, n)| Note { pitch: if k == 0 { n.pitch } else { n.pitch + 12 }, ..*n }).collect();
    let mean = aggregate(&[
        evaluate(&one, &one, &cfg),
        evaluate(&NoteSequence::from_notes(ten), &NoteSequence::from_notes(ten_est), &cfg),
    ]);
    let counterexample = (mean.note.f1 - 0.55).abs() < 1e-12;
    check(
        mismatches == 0 && imperfect == 0 && counterexample,
        format!("{mismatches} matching mismatches, {imperfect} imperfect self-scores, per-piece mean F1 {:.3}", mean.note.f1),
    )
}

fn augmentation_sampling() -> Verdict {
    let (lo, hi) = (32f64.ln(), 4096f64.ln());
    let specs: Vec<_> = (0..100_000u64).map(sample_augmentation).collect();
    let out_of_range = specs.iter().filter(|s| !s.params.in_range()).count();
    let mut ks = 0.0f64;
    for get in [|s: &maestro_core::dataset::AugmentationSpec| s.params.eq1_freq, |s: &maestro_core::dataset::AugmentationSpec| s.params.eq2_freq] {
        let mut u: Vec<f64> = specs.iter().map(|s| (get(s).ln() - lo) / (hi - lo)).collect();
        ks = ks.max(common::ks_uniform(&mut u));
    }
    let bytes = |seeds: std::ops::Range<u64>| serde_json::to_vec(&seeds.map(sample_augmentation).collect::<Vec<_>>()).unwrap();
    let identical = bytes(0..100_000) == serde_json::to_vec(&specs).unwrap() && bytes(0..1000) == bytes(0..1000);
    check(out_of_range == 0 && ks < 0.02 && identical, format!("{out_of_range} out of range, KS {ks:.4}, repeat identical {identical}"))
}

fn determinism() -> Verdict {
    let corpus = tempfile::tempdir().unwrap();
    support::build_fixture(corpus.path());
    let mut snapshots = Vec::new();
    for workers in [1, 8] {
        let out = tempfile::tempdir().unwrap();
        for run in support::pipeline(corpus.path(), out.path(), workers) {
            if !run.status.success() {
                return Verdict::Fail(format!("workers {workers}: {}", String::from_utf8_lossy(&run.stderr)));
            }
        }
        snapshots.push(support::snapshot(out.path()));
    }
    let differing: Vec<&String> = snapshots[0].iter().filter(|(k, v)| snapshots[1].get(*k) != Some(v)).map(|(k, _)| k).collect();
    let same_files = snapshots[0].keys().eq(snapshots[1].keys());
    check(same_files && differing.is_empty(), format!("{} files compared, differing {differing:?}", snapshots[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("1 coarse shift recovery", coarse_shift_recovery),
        ("2 fine alignment accuracy", fine_alignment_accuracy),
        ("3 dtw oracle equivalence", dtw_oracle_equivalence),
        ("4 penalty estimator", penalty_estimator),
        ("5 segmentation oracle", segmentation_oracle),
        ("6 split constraints", split_constraints),
        ("6 published statistics", published_statistics),
        ("7 onset roll", onset_roll_frames),
        ("8 offset labels", offset_labels),
        ("9 metrics oracle", metrics_oracle),
        ("10 augmentation sampling", augmentation_sampling),
        ("11 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let verdict = run();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Verdict::Pass(d) => println!("PASS  {name} ({secs:.1} s): {d}"),
            Verdict::Skip(d) => println!("SKIP  {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1} s): {d}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
