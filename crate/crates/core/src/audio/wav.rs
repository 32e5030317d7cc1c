use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, AudioError};
use crate::scalar::Real;

const FULL_SCALE: f64 = 32768.0;

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("unsupported WAV feature".into()),
        other => AudioError::Malformed(other.to_string()),
    }
}

/// Decodes a 16-bit PCM RIFF/WAVE stream; samples are scaled by `1/32768`.
pub fn read_wav<T: Real>(bytes: &[u8]) -> Result<AudioBuffer<T>, AudioError> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{:?} {}-bit (only 16-bit PCM is supported)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(AudioError::Channels(spec.channels));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| T::from_f64_lossy(f64::from(v) / FULL_SCALE)))
        .collect::<Result<Vec<T>, _>>()
        .map_err(map_hound)?;
    AudioBuffer::new(samples, spec.sample_rate, spec.channels)
}

/// Encodes as 16-bit PCM, rounding `x * 32768` and clamping to the `i16` range.
pub fn write_wav<T: Real>(audio: &AudioBuffer<T>) -> Result<Vec<u8>, AudioError> {
    let spec = WavSpec {
        channels: audio.channels(),
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::with_capacity(44 + audio.samples().len() * 2));
    {
        let mut writer = WavWriter::new(&mut cursor, spec).map_err(map_hound)?;
        let mut w16 = writer.get_i16_writer(audio.samples().len() as u32);
        for s in audio.samples() {
            let v = (s.to_f64_lossy() * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16;
            w16.write_sample(v);
        }
        w16.flush().map_err(map_hound)?;
        writer.finalize().map_err(map_hound)?;
    }
    Ok(cursor.into_inner())
}

pub fn read_wav_file<T: Real>(path: impl AsRef<Path>) -> Result<AudioBuffer<T>, AudioError> {
    read_wav(&std::fs::read(path)?)
}

pub fn write_wav_file<T: Real>(path: impl AsRef<Path>, audio: &AudioBuffer<T>) -> Result<(), AudioError> {
    std::fs::write(path, write_wav(audio)?)?;
    Ok(())
}
