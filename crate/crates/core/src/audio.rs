//! WAV decoding, peak normalization and resampling for the cleaning stage.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported WAV format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for AudioError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => AudioError::Io(io),
            other => AudioError::Format(other.to_string()),
        }
    }
}

/// Mono waveform with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate_hz,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    #[default]
    Linear,
    Sinc,
}

const PCM16_SCALE: f32 = 32768.0;

/// Reads a PCM16 or float32 WAV file, averaging channels to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::Format("zero channels".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / PCM16_SCALE))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v.clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(AudioError::Format(format!("{bits}-bit {fmt:?} samples")));
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "truncated frame",
        )));
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

/// Duration from the WAV header alone.
pub fn wav_duration_s(path: impl AsRef<Path>) -> Result<f64, AudioError> {
    let reader = hound::WavReader::open(path)?;
    Ok(reader.duration() as f64 / reader.spec().sample_rate as f64)
}

/// Writes the buffer as mono PCM16.
pub fn write_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &buf.samples {
        writer.write_sample(to_pcm16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

fn to_pcm16(s: f32) -> i16 {
    (s * PCM16_SCALE)
        .round()
        .clamp(i16::MIN as f32, i16::MAX as f32) as i16
}

/// Scales the buffer so its peak magnitude equals `target_peak`. Silent
/// buffers are returned unchanged.
pub fn peak_normalize(buf: &AudioBuffer, target_peak: f32) -> AudioBuffer {
    let peak = buf.peak();
    if peak == 0.0 {
        return buf.clone();
    }
    let gain = target_peak / peak;
    let samples = buf
        .samples
        .iter()
        .map(|&s| (s * gain).clamp(-target_peak, target_peak))
        .collect();
    AudioBuffer::new(samples, buf.sample_rate_hz)
}

/// Output length for a rate conversion: `round(len * target / source)`.
pub fn resampled_len(len: usize, source_hz: u32, target_hz: u32) -> usize {
    ((len as u128 * target_hz as u128 * 2 + source_hz as u128) / (source_hz as u128 * 2)) as usize
}

pub fn resample(buf: &AudioBuffer, target_hz: u32, mode: ResampleMode) -> AudioBuffer {
    if buf.sample_rate_hz == target_hz {
        return buf.clone();
    }
    let out_len = resampled_len(buf.samples.len(), buf.sample_rate_hz, target_hz);
    let ratio = buf.sample_rate_hz as f64 / target_hz as f64;
    let samples = match mode {
        ResampleMode::Linear => linear(&buf.samples, out_len, ratio),
        ResampleMode::Sinc => windowed_sinc(&buf.samples, out_len, ratio),
    };
    AudioBuffer::new(samples, target_hz)
}

fn linear(src: &[f32], out_len: usize, ratio: f64) -> Vec<f32> {
    if src.is_empty() {
        return vec![0.0; out_len];
    }
    let last = src.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let idx = (pos.floor() as usize).min(last);
            let frac = (pos - idx as f64).clamp(0.0, 1.0) as f32;
            let a = src[idx];
            let b = src[(idx + 1).min(last)];
            a + (b - a) * frac
        })
        .collect()
}

const SINC_ZERO_CROSSINGS: f64 = 16.0;

// Blackman-windowed sinc with the cutoff lowered to the target Nyquist when
// downsampling. Weights are renormalized so DC passes through unchanged.
fn windowed_sinc(src: &[f32], out_len: usize, ratio: f64) -> Vec<f32> {
    if src.is_empty() {
        return vec![0.0; out_len];
    }
    let cutoff = (1.0 / ratio).min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    (0..out_len)
        .map(|i| {
            let center = i as f64 * ratio;
            let lo = (center - half_width).ceil().max(0.0) as usize;
            let hi = ((center + half_width).floor() as usize).min(src.len() - 1);
            let (mut acc, mut wsum) = (0.0f64, 0.0f64);
            for (j, &s) in src.iter().enumerate().take(hi + 1).skip(lo) {
                let x = j as f64 - center;
                let t = x / half_width;
                let window = 0.42 + 0.5 * (PI * t).cos() + 0.08 * (2.0 * PI * t).cos();
                let arg = PI * x * cutoff;
                let sinc = if arg.abs() < 1e-12 {
                    1.0
                } else {
                    arg.sin() / arg
                };
                let w = sinc * window;
                acc += w * s as f64;
                wsum += w;
            }
            if wsum.abs() < 1e-12 {
                0.0
            } else {
                (acc / wsum).clamp(-1.0, 1.0) as f32
            }
        })
        .collect()
}
