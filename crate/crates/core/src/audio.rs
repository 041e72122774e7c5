//! Mono audio buffers, WAV ingestion and sample-rate conversion.

use std::path::Path;

use crate::error::{Error, Result};

/// Analysis sample rate used throughout the toolkit.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Number of taps in the windowed-sinc resampling kernel.
pub const RESAMPLER_TAPS: usize = 64;

/// A mono sample sequence with its sample rate. Samples are nominally in
/// `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Concatenates `other` after `self`. Both must share a sample rate.
    pub fn concat(&self, other: &AudioBuffer) -> Result<Self> {
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::invalid(
                "cannot concatenate buffers with different rates",
            ));
        }
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        Ok(Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}

/// Reads a RIFF/WAVE file. 16- and 24-bit integer and 32-bit float PCM are
/// accepted; multi-channel audio is mixed down by averaging the channels.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::invalid(format!("{}: zero channels", path.display())));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Int, 24) => reader
            .samples::<i32>()
            .map(|s| s.map(|v| v as f64 / 8_388_608.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (format, bits) => {
            return Err(Error::invalid(format!(
                "{}: unsupported sample format {format:?} with {bits} bits",
                path.display()
            )))
        }
    };

    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Writes a mono 32-bit float WAV file. Samples are stored losslessly up to
/// f32 precision.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    write_wav_with(path, audio, WavEncoding::Float32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Int16,
    Int24,
    Float32,
}

pub fn write_wav_with(
    path: impl AsRef<Path>,
    audio: &AudioBuffer,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Int16 => (16, hound::SampleFormat::Int),
        WavEncoding::Int24 => (24, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate_hz,
        bits_per_sample,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &audio.samples {
        let s = s.clamp(-1.0, 1.0);
        match encoding {
            WavEncoding::Int16 => writer.write_sample((s * 32767.0).round() as i16),
            WavEncoding::Int24 => writer.write_sample((s * 8_388_607.0).round() as i32),
            WavEncoding::Float32 => writer.write_sample(s as f32),
        }
        .map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn blackman(x: f64) -> f64 {
    // x in [-1, 1], 0 at the centre.
    if x.abs() >= 1.0 {
        return 0.0;
    }
    let t = std::f64::consts::PI * (x + 1.0);
    0.42 - 0.5 * t.cos() + 0.08 * (2.0 * t).cos()
}

/// Converts `audio` to `target_rate_hz` with a 64-tap Blackman-windowed sinc
/// polyphase filter. The cutoff sits just below the lower of the two Nyquist
/// frequencies, so downsampling is band-limited. A buffer already at the
/// target rate is returned unchanged.
pub fn resample(audio: &AudioBuffer, target_rate_hz: u32) -> Result<AudioBuffer> {
    if target_rate_hz == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    if audio.is_empty() {
        return Err(Error::invalid("cannot resample an empty buffer"));
    }
    if audio.sample_rate_hz == target_rate_hz {
        return Ok(audio.clone());
    }

    let g = gcd(audio.sample_rate_hz as u64, target_rate_hz as u64);
    let up = target_rate_hz as u64 / g;
    let down = audio.sample_rate_hz as u64 / g;
    // Cutoff relative to the input Nyquist.
    let cutoff = 0.95 * (up as f64 / down as f64).min(1.0);
    let half = (RESAMPLER_TAPS / 2) as i64;

    // One kernel per output phase. Tap j reads input sample base + j - (half - 1).
    let phases: Vec<Vec<f64>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            let mut taps: Vec<f64> = (0..RESAMPLER_TAPS as i64)
                .map(|j| {
                    let offset = (j - (half - 1)) as f64 - frac;
                    cutoff * sinc(cutoff * offset) * blackman(offset / half as f64)
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            taps
        })
        .collect();

    let n_in = audio.samples.len() as u64;
    let n_out = (n_in * up).div_ceil(down) as usize;
    let input = &audio.samples;
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out as u64 {
        let pos = m * down;
        let base = (pos / up) as i64;
        let taps = &phases[(pos % up) as usize];
        let mut acc = 0.0;
        for (j, &w) in taps.iter().enumerate() {
            let idx = base + j as i64 - (half - 1);
            if idx >= 0 && (idx as u64) < n_in {
                acc += w * input[idx as usize];
            }
        }
        out.push(acc);
    }
    AudioBuffer::new(out, target_rate_hz)
}
