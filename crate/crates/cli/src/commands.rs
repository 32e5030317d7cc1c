use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use maestro_core::audio::{read_wav_file, write_wav_file, AudioBuffer};
use maestro_core::coarse::{align_session, ReportRecord};
use maestro_core::dataset::{
    compute_stats, emit_effect_chain, make_split, onset_roll_with, read_manifest, sample_augmentation,
    training_labels, verify_split, write_manifest, AugmentationSpec, ManifestRecord,
};
use maestro_core::dtw::{apply_warp, fine_align};
use maestro_core::eval::{aggregate, evaluate, EvalScores};
use maestro_core::midi::{apply_sustain, parse_smf, write_smf, NoteSequence, SUSTAIN_THRESHOLD};
use maestro_core::segment::{backtracking_segment, finalize_segments, greedy_segment, Segment};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::{Command, GlobalArgs, Outcome};

pub fn dispatch(cfg: &PipelineConfig, global: &GlobalArgs, command: &Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Align { sessions, out } => cmd_align(cfg, sessions, &output(cfg, out, "align.jsonl")),
        Command::Segment { jobs, out_dir } => cmd_segment(cfg, jobs, &output(cfg, out_dir, "segments")),
        Command::Finewarp { jobs, out_dir } => cmd_finewarp(cfg, jobs, &output(cfg, out_dir, "finewarp")),
        Command::Split { out } => cmd_split(cfg, manifest(global)?, &output(cfg, out, "split.csv")),
        Command::Stats { count_notes, out } => cmd_stats(cfg, manifest(global)?, *count_notes, &output(cfg, out, "stats.json")),
        Command::Roll { midi, labels, out_dir } => cmd_roll(cfg, midi, *labels, &output(cfg, out_dir, "rolls")),
        Command::Eval { ref_dir, est_dir, out } => cmd_eval(cfg, ref_dir, est_dir, &output(cfg, out, "eval.json")),
        Command::AugmentSpec { count, out } => cmd_augment_spec(cfg, *count, &output(cfg, out, "augment.jsonl")),
        Command::DefaultConfig => Ok(Outcome::default()),
    }
}

fn output(cfg: &PipelineConfig, given: &Option<PathBuf>, default_name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.output_root.join(default_name))
}

fn manifest(global: &GlobalArgs) -> anyhow::Result<&Path> {
    global.manifest.as_deref().context("--manifest is required for this command")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter().map(|r| serde_json::to_string(r).expect("report rows serialize") + "\n").collect()
}

fn read_midi(cfg: &PipelineConfig, path: &Path) -> anyhow::Result<NoteSequence> {
    let full = cfg.resolve(path);
    let bytes = fs::read(&full).with_context(|| format!("reading {}", full.display()))?;
    parse_smf(&bytes).with_context(|| format!("parsing {}", full.display()))
}

fn read_audio(cfg: &PipelineConfig, path: &Path) -> anyhow::Result<AudioBuffer<f32>> {
    let full = cfg.resolve(path);
    read_wav_file(&full).with_context(|| format!("reading {}", full.display()))
}

#[derive(Debug, Deserialize)]
struct SessionJob {
    id: String,
    midi: PathBuf,
    #[serde(default)]
    audio: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct AlignRow {
    session: String,
    #[serde(flatten)]
    record: ReportRecord,
}

fn cmd_align(cfg: &PipelineConfig, sessions: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let jobs: Vec<SessionJob> = read_json(sessions)?;
    let per_session: Vec<Vec<AlignRow>> = jobs.par_iter().map(|job| align_one(cfg, job)).collect();
    let rows: Vec<AlignRow> = per_session.into_iter().flatten().collect();
    write_file(out, jsonl(&rows))?;
    let failures = rows.iter().filter(|r| r.record.status != "aligned").count();
    Ok(Outcome { processed: rows.len(), failures })
}

fn failed_row(session: &str, audio_id: &str, error: &anyhow::Error) -> AlignRow {
    AlignRow {
        session: session.to_string(),
        record: ReportRecord {
            audio_id: audio_id.to_string(),
            status: "failed".into(),
            shift: None,
            mse: None,
            midi_range: None,
            error: Some(format!("{error:#}")),
        },
    }
}

fn align_one(cfg: &PipelineConfig, job: &SessionJob) -> Vec<AlignRow> {
    let midi = match read_midi(cfg, &job.midi) {
        Ok(ns) => apply_sustain(&ns, SUSTAIN_THRESHOLD),
        Err(e) => return vec![failed_row(&job.id, "", &e)],
    };
    let mut rows = Vec::new();
    let mut audios = Vec::new();
    for path in &job.audio {
        let id = path.display().to_string();
        match read_audio(cfg, path) {
            Ok(a) => audios.push((id, a)),
            Err(e) => rows.push(failed_row(&job.id, &id, &e)),
        }
    }
    match align_session(&audios, &midi, &cfg.align) {
        Ok(entries) => rows.extend(entries.iter().map(|e| AlignRow { session: job.id.clone(), record: e.report() })),
        Err(e) => rows.push(failed_row(&job.id, "", &e.into())),
    }
    rows
}

#[derive(Debug, Deserialize)]
struct SegmentJob {
    id: String,
    midi: PathBuf,
    audio: Option<PathBuf>,
    /// MIDI time of the audio's first sample.
    #[serde(default)]
    shift: f64,
    durations: Option<Vec<f64>>,
    pieces: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SegmentRow {
    id: String,
    status: String,
    method: Option<String>,
    segments: Vec<Segment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_segment(cfg: &PipelineConfig, jobs: &Path, out_dir: &Path) -> anyhow::Result<Outcome> {
    let jobs: Vec<SegmentJob> = read_json(jobs)?;
    let rows: Vec<SegmentRow> = jobs
        .par_iter()
        .map(|job| {
            segment_one(cfg, job, out_dir).unwrap_or_else(|e| SegmentRow {
                id: job.id.clone(),
                status: "failed".into(),
                method: None,
                segments: Vec::new(),
                warning: None,
                error: Some(format!("{e:#}")),
            })
        })
        .collect();
    write_file(&out_dir.join("segment.jsonl"), jsonl(&rows))?;
    let failures = rows.iter().filter(|r| r.status != "segmented").count();
    Ok(Outcome { processed: rows.len(), failures })
}

fn segment_one(cfg: &PipelineConfig, job: &SegmentJob, out_dir: &Path) -> anyhow::Result<SegmentRow> {
    let ns = read_midi(cfg, &job.midi)?;
    let sustained = apply_sustain(&ns, SUSTAIN_THRESHOLD);
    let (method, raw, warning) = match (&job.durations, job.pieces) {
        (Some(durations), _) => {
            let plan = backtracking_segment(&sustained, durations, &cfg.segment.search)?;
            ("backtracking", plan.segments(), None)
        }
        (None, Some(n)) => {
            let g = greedy_segment(&sustained, n)?;
            ("greedy", g.segments, g.warning)
        }
        (None, None) => bail!("job needs either durations or pieces"),
    };
    let segments = finalize_segments(&sustained, &raw, &cfg.segment.finalize);
    let audio = job.audio.as_ref().map(|p| read_audio(cfg, p)).transpose()?;
    let dir = out_dir.join(&job.id);
    for (k, seg) in segments.iter().enumerate() {
        write_file(&dir.join(format!("piece_{k:02}.mid")), write_smf(&ns.slice(seg.start, seg.end)))?;
        if let Some(a) = &audio {
            let clip = a.slice_seconds((seg.start - job.shift).max(0.0), (seg.end - job.shift).max(0.0));
            let path = dir.join(format!("piece_{k:02}.wav"));
            fs::create_dir_all(&dir)?;
            write_wav_file(&path, &clip).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    write_file(&dir.join("segments.json"), serde_json::to_string_pretty(&segments)? + "\n")?;
    Ok(SegmentRow {
        id: job.id.clone(),
        status: "segmented".into(),
        method: Some(method.into()),
        segments,
        warning,
        error: None,
    })
}

#[derive(Debug, Deserialize)]
struct PairJob {
    id: String,
    midi: PathBuf,
    audio: PathBuf,
}

#[derive(Debug, Serialize)]
struct FinewarpRow {
    id: String,
    status: String,
    penalty: Option<f64>,
    total_cost: Option<f64>,
    path_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_finewarp(cfg: &PipelineConfig, jobs: &Path, out_dir: &Path) -> anyhow::Result<Outcome> {
    let jobs: Vec<PairJob> = read_json(jobs)?;
    let rows: Vec<FinewarpRow> = jobs
        .par_iter()
        .map(|job| {
            finewarp_one(cfg, job, out_dir).unwrap_or_else(|e| FinewarpRow {
                id: job.id.clone(),
                status: "failed".into(),
                penalty: None,
                total_cost: None,
                path_length: None,
                error: Some(format!("{e:#}")),
            })
        })
        .collect();
    write_file(&out_dir.join("finewarp.jsonl"), jsonl(&rows))?;
    let failures = rows.iter().filter(|r| r.status != "warped").count();
    Ok(Outcome { processed: rows.len(), failures })
}

fn finewarp_one(cfg: &PipelineConfig, job: &PairJob, out_dir: &Path) -> anyhow::Result<FinewarpRow> {
    let ns = read_midi(cfg, &job.midi)?;
    let audio = read_audio(cfg, &job.audio)?;
    let fa = fine_align(&audio, &apply_sustain(&ns, SUSTAIN_THRESHOLD), &cfg.finewarp)?;
    write_file(&out_dir.join(format!("{}.mid", job.id)), write_smf(&apply_warp(&ns, &fa.map)))?;
    write_file(&out_dir.join(format!("{}.warp.txt", job.id)), fa.map.to_text())?;
    Ok(FinewarpRow {
        id: job.id.clone(),
        status: "warped".into(),
        penalty: Some(fa.penalty),
        total_cost: Some(fa.path.total_cost),
        path_length: Some(fa.path.pairs.len()),
        error: None,
    })
}

fn load_manifest(path: &Path) -> anyhow::Result<Vec<ManifestRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_manifest(file).with_context(|| format!("reading {}", path.display()))
}

fn cmd_split(cfg: &PipelineConfig, manifest: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let records = load_manifest(manifest)?;
    let assignment = make_split(&records, &cfg.split, cfg.seed);
    let report = verify_split(&assignment, &records, &cfg.split);
    let mut csv = Vec::new();
    write_manifest(&mut csv, &assignment.apply(&records))?;
    write_file(out, csv)?;
    let report_json = serde_json::json!({ "warnings": assignment.warnings, "report": report });
    write_file(&out.with_extension("report.json"), serde_json::to_string_pretty(&report_json)? + "\n")?;
    Ok(Outcome { processed: records.len(), failures: report.hard_violations().count() })
}

fn cmd_stats(cfg: &PipelineConfig, manifest: &Path, count_notes: bool, out: &Path) -> anyhow::Result<Outcome> {
    let records = load_manifest(manifest)?;
    let mut failures = 0;
    let notes = if count_notes {
        let counts: Vec<Option<u64>> = records
            .par_iter()
            .map(|r| read_midi(cfg, Path::new(&r.midi_path)).ok().map(|ns| ns.len() as u64))
            .collect();
        failures = counts.iter().filter(|c| c.is_none()).count();
        Some(records.iter().zip(counts).filter_map(|(r, c)| c.map(|c| (r.performance_id().to_string(), c))).collect::<BTreeMap<_, _>>())
    } else {
        None
    };
    let table = compute_stats(&records, notes.as_ref());
    print!("{table}");
    write_file(out, serde_json::to_string_pretty(&table)? + "\n")?;
    Ok(Outcome { processed: records.len(), failures })
}

fn cmd_roll(cfg: &PipelineConfig, midi: &[PathBuf], labels: bool, out_dir: &Path) -> anyhow::Result<Outcome> {
    let results: Vec<anyhow::Result<()>> = midi
        .par_iter()
        .map(|path| {
            let ns = read_midi(cfg, path)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let roll = onset_roll_with::<f32>(&ns, &cfg.roll)?;
            write_file(&out_dir.join(format!("{stem}.onsets.txt")), roll.to_text())?;
            if labels {
                let sustained = apply_sustain(&ns, SUSTAIN_THRESHOLD);
                let l = training_labels::<f32>(&sustained, cfg.roll.frame_rate)?;
                write_file(&out_dir.join(format!("{stem}.onset_labels.txt")), l.onset.to_text())?;
                write_file(&out_dir.join(format!("{stem}.frame_labels.txt")), l.frame.to_text())?;
                write_file(&out_dir.join(format!("{stem}.offset_labels.txt")), l.offset.to_text())?;
            }
            Ok(())
        })
        .collect();
    let mut failures = 0;
    for (path, r) in midi.iter().zip(&results) {
        if let Err(e) = r {
            log::error!("{}: {e:#}", path.display());
            failures += 1;
        }
    }
    Ok(Outcome { processed: midi.len(), failures })
}

fn midi_files(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".mid") || n.ends_with(".midi"))
        .collect();
    names.sort();
    Ok(names)
}

#[derive(Debug, Serialize)]
struct PieceScores {
    piece: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<EvalScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_eval(cfg: &PipelineConfig, ref_dir: &Path, est_dir: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let names = midi_files(ref_dir)?;
    let pieces: Vec<PieceScores> = names
        .par_iter()
        .map(|name| {
            let score = || -> anyhow::Result<EvalScores> {
                let r = read_midi(cfg, &ref_dir.join(name))?;
                let e = read_midi(cfg, &est_dir.join(name))?;
                Ok(evaluate(&apply_sustain(&r, SUSTAIN_THRESHOLD), &apply_sustain(&e, SUSTAIN_THRESHOLD), &cfg.eval))
            };
            match score() {
                Ok(s) => PieceScores { piece: name.clone(), scores: Some(s), error: None },
                Err(e) => PieceScores { piece: name.clone(), scores: None, error: Some(format!("{e:#}")) },
            }
        })
        .collect();
    let scored: Vec<EvalScores> = pieces.iter().filter_map(|p| p.scores).collect();
    let mean = aggregate(&scored);
    print!("{mean}");
    let doc = serde_json::json!({ "mean": mean, "pieces": pieces });
    write_file(out, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(Outcome { processed: pieces.len(), failures: pieces.len() - scored.len() })
}

#[derive(Debug, Serialize)]
struct AugmentRow {
    #[serde(flatten)]
    spec: AugmentationSpec,
    chain: Vec<String>,
}

fn cmd_augment_spec(cfg: &PipelineConfig, count: u64, out: &Path) -> anyhow::Result<Outcome> {
    let rows: Vec<AugmentRow> = (0..count)
        .into_par_iter()
        .map(|k| {
            let spec = sample_augmentation(cfg.seed.wrapping_add(k));
            AugmentRow { chain: emit_effect_chain(&spec.params), spec }
        })
        .collect();
    write_file(out, jsonl(&rows))?;
    Ok(Outcome { processed: rows.len(), failures: 0 })
}
