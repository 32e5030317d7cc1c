//! Small on-disk corpus and the pipeline invocations exercised against it.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maestro_core::audio::{synthesize, write_wav_file, AudioBuffer};
use maestro_core::dataset::{write_manifest, ManifestRecord, Split};
use maestro_core::midi::{write_smf, Note, NoteSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_maestro")
}

pub fn maestro(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn piece(rng: &mut ChaCha8Rng, start: f64, len: f64, notes: &mut Vec<Note>) {
    let mut t = start;
    while t < start + len {
        let d = rng.gen_range(0.1..0.7);
        notes.push(Note::new(rng.gen_range(40..84), t, (t + d).min(start + len), rng.gen_range(30..110)).unwrap());
        t += rng.gen_range(0.1..0.4);
    }
}

/// Builds the corpus under `root` and returns the job files' directory (`root` itself).
pub fn build_fixture(root: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // A session with two pieces separated by a long pause, and one recording of the second.
    let mut notes = Vec::new();
    piece(&mut rng, 1.0, 40.0, &mut notes);
    piece(&mut rng, 75.0, 50.0, &mut notes);
    let session = NoteSequence::new(notes, vec![], 127.0);
    fs::write(root.join("session.mid"), write_smf(&session)).unwrap();
    let synth: AudioBuffer<f32> = synthesize(&session, 44100);
    write_wav_file(root.join("session.wav"), &synth).unwrap();
    write_wav_file(root.join("take2.wav"), &synth.slice_seconds(74.0, 126.0)).unwrap();

    // A short pair with smooth timing jitter for fine alignment.
    let mut short = Vec::new();
    piece(&mut rng, 0.5, 12.0, &mut short);
    let score = NoteSequence::new(short, vec![], 13.0);
    let performed = score.map_times(|t| t + 0.05 * (t / 2.0).sin());
    fs::write(root.join("short.mid"), write_smf(&score)).unwrap();
    write_wav_file(root.join("short.wav"), &synthesize::<f32>(&performed, 22050)).unwrap();

    // Reference and estimated transcriptions.
    fs::create_dir_all(root.join("ref")).unwrap();
    fs::create_dir_all(root.join("est")).unwrap();
    fs::write(root.join("ref/a.mid"), write_smf(&score)).unwrap();
    fs::write(root.join("est/a.mid"), write_smf(&performed)).unwrap();
    fs::write(root.join("ref/b.mid"), write_smf(&score)).unwrap();
    fs::write(root.join("est/b.mid"), write_smf(&score)).unwrap();

    let mut records = Vec::new();
    for c in 0..40 {
        for p in 0..1 + c % 3 {
            records.push(ManifestRecord {
                composer: ["Chopin", "Liszt", "Bach", "Haydn"][c % 4].into(),
                title: format!("Piece No. {c}"),
                split: Split::Unassigned,
                year: 2010 + (c % 5) as i32,
                midi_path: format!("perf/{c:03}_{p}.midi"),
                audio_path: format!("perf/{c:03}_{p}.wav"),
                duration: rng.gen_range(100.0..900.0),
            });
        }
    }
    let mut csv = Vec::new();
    write_manifest(&mut csv, &records).unwrap();
    fs::write(root.join("manifest.csv"), csv).unwrap();

    fs::write(
        root.join("sessions.json"),
        r#"[{"id": "s1", "midi": "session.mid", "audio": ["take2.wav"]}]"#,
    )
    .unwrap();
    fs::write(
        root.join("segments.json"),
        r#"[{"id": "s1", "midi": "session.mid", "audio": "session.wav", "shift": 0.0, "durations": [57.0, 68.0]},
            {"id": "s1_greedy", "midi": "session.mid", "pieces": 2}]"#,
    )
    .unwrap();
    fs::write(root.join("pairs.json"), r#"[{"id": "short", "midi": "short.mid", "audio": "short.wav"}]"#).unwrap();
    root.to_path_buf()
}

/// Every subcommand once, writing under `out`.
pub fn pipeline(corpus: &Path, out: &Path, workers: usize) -> Vec<Output> {
    fs::create_dir_all(out).unwrap();
    let config = out.join("config.toml");
    fs::write(&config, format!("corpus_root = {:?}\noutput_root = {:?}\nseed = 5\n", corpus, out)).unwrap();
    let c = |p: &str| corpus.join(p).to_string_lossy().into_owned();
    let o = |p: &str| out.join(p).to_string_lossy().into_owned();
    let common = ["--config".to_string(), config.to_string_lossy().into_owned(), "--workers".into(), workers.to_string()];
    let runs: Vec<Vec<String>> = vec![
        vec!["align".into(), "--sessions".into(), c("sessions.json"), "--out".into(), o("align.jsonl")],
        vec!["segment".into(), "--jobs".into(), c("segments.json"), "--out-dir".into(), o("segments")],
        vec!["finewarp".into(), "--jobs".into(), c("pairs.json"), "--out-dir".into(), o("finewarp")],
        vec!["split".into(), "--manifest".into(), c("manifest.csv"), "--out".into(), o("split.csv")],
        vec!["stats".into(), "--manifest".into(), o("split.csv"), "--out".into(), o("stats.json")],
        vec!["roll".into(), c("short.mid"), c("session.mid"), "--labels".into(), "--out-dir".into(), o("rolls")],
        vec!["eval".into(), "--ref-dir".into(), c("ref"), "--est-dir".into(), c("est"), "--out".into(), o("eval.json")],
        vec!["augment-spec".into(), "--count".into(), "50".into(), "--out".into(), o("augment.jsonl")],
    ];
    runs.into_iter()
        .map(|mut args| {
            args.extend(common.iter().cloned());
            Command::new(bin()).args(&args).output().expect("binary runs")
        })
        .collect()
}

/// Relative path to contents for every file under `dir` except the config.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else if path.file_name().is_some_and(|n| n != "config.toml") {
                out.insert(path.strip_prefix(base).unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
