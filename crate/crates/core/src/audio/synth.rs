use std::f64::consts::PI;

use rayon::prelude::*;

use super::AudioBuffer;
use crate::midi::NoteSequence;
use crate::scalar::Real;

/// Partials rendered per note: the fundamental and harmonics 2..=6 at amplitude `1/h`.
pub const HARMONICS: usize = 6;
pub const SYNTH_DECAY_SECONDS: f64 = 0.6;
/// Time a note keeps sounding after its offset before being cut.
pub const SYNTH_RELEASE_SECONDS: f64 = 0.05;
pub const SYNTH_PEAK: f64 = 0.9;

const BLOCK: usize = 4096;

struct Voice {
    start: usize,
    end: usize,
    onset: f64,
    freq: f64,
    amp: f64,
}

/// Renders a sequence with a decaying harmonic-stack voice per note, peak-normalized to 0.9.
///
/// Output covers `max(total_time, last offset + release)` seconds. Rendering runs in
/// independent blocks, so the result does not depend on the thread count.
pub fn synthesize<T: Real>(ns: &NoteSequence, sample_rate: u32) -> AudioBuffer<T> {
    let sr = f64::from(sample_rate);
    let end_time = ns
        .last_offset()
        .map_or(ns.total_time(), |o| ns.total_time().max(o + SYNTH_RELEASE_SECONDS));
    let len = (end_time * sr).ceil() as usize;

    let voices: Vec<Voice> = ns
        .notes()
        .iter()
        .map(|n| Voice {
            start: (n.onset * sr).ceil() as usize,
            end: (((n.offset + SYNTH_RELEASE_SECONDS) * sr).ceil() as usize).min(len),
            onset: n.onset,
            freq: 440.0 * 2f64.powf((f64::from(n.pitch) - 69.0) / 12.0),
            amp: f64::from(n.velocity) / 127.0,
        })
        .collect();

    let n_blocks = len.div_ceil(BLOCK);
    let mut per_block: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
    for (i, v) in voices.iter().enumerate() {
        if v.end > v.start {
            for list in &mut per_block[v.start / BLOCK..=(v.end - 1) / BLOCK] {
                list.push(i);
            }
        }
    }

    let decay_per_sample = (-1.0 / (SYNTH_DECAY_SECONDS * sr)).exp();
    let mut out = vec![0.0f64; len];
    out.par_chunks_mut(BLOCK).zip(per_block.par_iter()).enumerate().for_each(|(b, (chunk, list))| {
        let b0 = b * BLOCK;
        for &vi in list {
            let v = &voices[vi];
            let from = v.start.max(b0);
            let to = v.end.min(b0 + chunk.len());
            let t0 = from as f64 / sr - v.onset;
            let env0 = v.amp * (-t0 / SYNTH_DECAY_SECONDS).exp();
            for h in 1..=HARMONICS {
                let f = v.freq * h as f64;
                if f >= 0.5 * sr {
                    break;
                }
                let w = 2.0 * PI * f / sr;
                // Damped rotating phasor; the imaginary part is the partial.
                let (rot_re, rot_im) = (decay_per_sample * w.cos(), decay_per_sample * w.sin());
                let phase = 2.0 * PI * f * t0;
                let a = env0 / h as f64;
                let (mut re, mut im) = (a * phase.cos(), a * phase.sin());
                for s in &mut chunk[from - b0..to - b0] {
                    *s += im;
                    let nre = re * rot_re - im * rot_im;
                    im = re * rot_im + im * rot_re;
                    re = nre;
                }
            }
        }
    });

    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let gain = if peak > 0.0 { SYNTH_PEAK / peak } else { 0.0 };
    AudioBuffer::mono(out.into_iter().map(|s| T::from_f64_lossy(s * gain)).collect(), sample_rate)
}
