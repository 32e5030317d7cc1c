use std::f64::consts::PI;
use std::sync::OnceLock;

use super::AudioBuffer;
use crate::scalar::Real;

/// Zero crossings of the sinc kernel on each side of the centre (64 taps at unit ratio).
const HALF_TAPS: usize = 32;
const KAISER_BETA: f64 = 8.0;
/// Table points per zero crossing; the kernel is linearly interpolated between them.
const TABLE_DENSITY: usize = 512;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc sampled on `u in [0, 1]`, where `u = 1` is `HALF_TAPS` zero crossings out.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = HALF_TAPS * TABLE_DENSITY;
        let norm = bessel_i0(KAISER_BETA);
        (0..=n + 1)
            .map(|i| {
                let u = (i as f64 / n as f64).min(1.0);
                let x = u * HALF_TAPS as f64;
                let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                sinc * bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / norm
            })
            .collect()
    })
}

/// Downmixes to mono and resamples with a 64-tap Kaiser-windowed sinc (beta 8).
///
/// The output holds `round(len * target / source)` samples. When downsampling, the kernel
/// is stretched so its cutoff sits at the target Nyquist frequency.
pub fn resample_mono<T: Real>(audio: &AudioBuffer<T>, target_rate: u32) -> AudioBuffer<T> {
    assert!(target_rate > 0, "target rate must be positive");
    let mono = audio.to_mono();
    let source_rate = audio.sample_rate();
    if source_rate == target_rate {
        return mono;
    }
    let x: Vec<f64> = mono.samples().iter().map(|s| s.to_f64_lossy()).collect();
    let ratio = f64::from(target_rate) / f64::from(source_rate);
    let cutoff = ratio.min(1.0);
    let half_width = HALF_TAPS as f64 / cutoff;
    let out_len = (x.len() as f64 * ratio).round() as usize;
    let table = kernel_table();
    let scale = (HALF_TAPS * TABLE_DENSITY) as f64 / half_width;

    let kernel = |d: f64| -> f64 {
        let pos = d.abs() * scale;
        let i = pos as usize;
        if i + 1 >= table.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        cutoff * (table[i] + (table[i + 1] - table[i]) * frac)
    };

    let step = f64::from(source_rate) / f64::from(target_rate);
    let samples = (0..out_len)
        .map(|n| {
            let t = n as f64 * step;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(x.len().saturating_sub(1));
            let mut acc = 0.0;
            if !x.is_empty() {
                for (k, xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
                    acc += xk * kernel(t - k as f64);
                }
            }
            T::from_f64_lossy(acc)
        })
        .collect();
    AudioBuffer::mono(samples, target_rate)
}
