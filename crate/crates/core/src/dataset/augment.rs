use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower edge of the log-uniform reverberance range (log 0 is undefined).
pub const REVERB_LOG_FLOOR: f64 = 0.01;
const PITCH_RANGE: (f64, f64) = (-0.1, 0.1);
const CONTRAST_RANGE: (f64, f64) = (0.0, 100.0);
const EQ_RANGE: (f64, f64) = (32.0, 4096.0);
const REVERB_MAX: f64 = 70.0;
const PINKNOISE_RANGE: (f64, f64) = (0.0, 0.04);
/// Width and gain of each equalizer band.
const EQ_WIDTH: &str = "2q";
const EQ_GAIN_DB: &str = "-6";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationParams {
    /// Semitones.
    pub pitch_shift: f64,
    pub contrast: f64,
    /// Hz.
    pub eq1_freq: f64,
    /// Hz.
    pub eq2_freq: f64,
    pub reverb: f64,
    pub pinknoise: f64,
}

impl AugmentationParams {
    pub fn in_range(&self) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(self.pitch_shift, PITCH_RANGE)
            && within(self.contrast, CONTRAST_RANGE)
            && within(self.eq1_freq, EQ_RANGE)
            && within(self.eq2_freq, EQ_RANGE)
            && within(self.reverb, (0.0, REVERB_MAX))
            && within(self.pinknoise, PINKNOISE_RANGE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub seed: u64,
    #[serde(flatten)]
    pub params: AugmentationParams,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi)
}

/// Draws one parameter set; pitch, contrast and noise are uniform, equalizer frequencies
/// and reverberance log-uniform.
pub fn sample_augmentation(seed: u64) -> AugmentationSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pitch_shift = rng.gen_range(PITCH_RANGE.0..=PITCH_RANGE.1);
    let contrast = rng.gen_range(CONTRAST_RANGE.0..=CONTRAST_RANGE.1);
    let eq1_freq = log_uniform(&mut rng, EQ_RANGE.0, EQ_RANGE.1);
    let eq2_freq = log_uniform(&mut rng, EQ_RANGE.0, EQ_RANGE.1);
    let reverb = log_uniform(&mut rng, REVERB_LOG_FLOOR, REVERB_MAX);
    let pinknoise = rng.gen_range(PINKNOISE_RANGE.0..=PINKNOISE_RANGE.1);
    AugmentationSpec { seed, params: AugmentationParams { pitch_shift, contrast, eq1_freq, eq2_freq, reverb, pinknoise } }
}

/// Effect arguments for an external SoX-style tool. `pinknoise` names the volume of pink
/// noise to mix in, which the caller applies as a separate input.
pub fn emit_effect_chain(params: &AugmentationParams) -> Vec<String> {
    let mut args = Vec::new();
    let mut push = |items: &[String]| args.extend_from_slice(items);
    push(&["pitch".into(), format!("{}", params.pitch_shift * 100.0)]);
    push(&["contrast".into(), format!("{}", params.contrast)]);
    for f in [params.eq1_freq, params.eq2_freq] {
        push(&["equalizer".into(), format!("{f}"), EQ_WIDTH.into(), EQ_GAIN_DB.into()]);
    }
    push(&["reverb".into(), format!("{}", params.reverb)]);
    push(&["pinknoise".into(), format!("{}", params.pinknoise)]);
    args
}

#[derive(Debug, Error, PartialEq)]
pub enum EffectChainError {
    #[error("unexpected token {0:?}")]
    UnexpectedToken(String),
    #[error("missing argument for {0}")]
    MissingArgument(&'static str),
    #[error("invalid number {0:?}")]
    InvalidNumber(String),
}

/// Inverse of [`emit_effect_chain`].
pub fn parse_effect_chain(args: &[String]) -> Result<AugmentationParams, EffectChainError> {
    let mut pos = 0;
    let mut next = |name: &'static str| -> Result<&String, EffectChainError> {
        let tok = args.get(pos).ok_or(EffectChainError::MissingArgument(name))?;
        pos += 1;
        Ok(tok)
    };
    let mut values = Vec::with_capacity(6);
    for name in ["pitch", "contrast", "equalizer", "equalizer", "reverb", "pinknoise"] {
        let head = next(name)?;
        if head != name {
            return Err(EffectChainError::UnexpectedToken(head.clone()));
        }
        let tok = next(name)?;
        values.push(tok.parse::<f64>().map_err(|_| EffectChainError::InvalidNumber(tok.clone()))?);
        if name == "equalizer" {
            for fixed in [EQ_WIDTH, EQ_GAIN_DB] {
                let tok = next(name)?;
                if tok != fixed {
                    return Err(EffectChainError::UnexpectedToken(tok.clone()));
                }
            }
        }
    }
    if let Some(extra) = args.get(pos) {
        return Err(EffectChainError::UnexpectedToken(extra.clone()));
    }
    Ok(AugmentationParams {
        pitch_shift: values[0] / 100.0,
        contrast: values[1],
        eq1_freq: values[2],
        eq2_freq: values[3],
        reverb: values[4],
        pinknoise: values[5],
    })
}
