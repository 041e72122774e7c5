//! Frame-level signal analysis: RMS loudness and the log-mel spectrogram.

use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::audio::AudioBuffer;
use crate::contour::{Contour, FrameSpec};
use crate::error::{Error, Result};

pub const DEFAULT_N_MELS: usize = 80;

/// Magnitude floor applied before the logarithm.
pub const MEL_FLOOR: f64 = 1e-5;
/// Log-magnitude mapped to the top of the output range.
pub const MEL_CEIL: f64 = 10.0;
/// Output range of the scaled log-mel values.
pub const MEL_RANGE: (f64, f64) = (-4.0, 4.0);

/// Root-mean-square amplitude of each fully contained frame.
pub fn rms_contour(audio: &AudioBuffer, spec: FrameSpec) -> Result<Contour> {
    spec.require_frames(audio.len())?;
    let values = spec
        .frames(audio.samples())
        .map(|frame| (frame.iter().map(|s| s * s).sum::<f64>() / frame.len() as f64).sqrt())
        .collect();
    Contour::rms(values, spec, audio.sample_rate_hz())
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular, area-normalized filters on the HTK mel scale spanning
/// 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_fft: usize,
    sample_rate_hz: u32,
    /// Band edges in Hz: `n_mels + 2` points, filter `m` spans
    /// `edges[m]..edges[m + 2]` and peaks at `edges[m + 1]`.
    edges: Vec<f64>,
    /// `n_mels` rows of `n_fft / 2 + 1` weights.
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate_hz: u32) -> Result<Self> {
        if n_mels < 1 {
            return Err(Error::invalid("n_mels must be at least 1"));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = sample_rate_hz as f64 / n_fft as f64;
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let norm = 2.0 / (hi - lo);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        };
                        w * norm
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            n_fft,
            sample_rate_hz,
            edges,
            weights,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Peak frequency of each filter, in Hz.
    pub fn center_frequencies(&self) -> Vec<f64> {
        self.edges[1..self.edges.len() - 1].to_vec()
    }

    pub fn apply(&self, magnitudes: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(magnitudes).map(|(w, m)| w * m).sum())
            .collect()
    }
}

/// Magnitude STFT with a periodic Hann window, zero-padded to the next
/// power of two at or above the window length.
pub struct Stft {
    window: Vec<f64>,
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(window_len: usize) -> Self {
        let n_fft = window_len.next_power_of_two();
        let window = (0..window_len)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / window_len as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self { window, n_fft, fft }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// `n_fft / 2 + 1` magnitudes of one frame.
    pub fn magnitudes(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        buf[..self.n_fft / 2 + 1].iter().map(|c| c.norm()).collect()
    }
}

/// Maps a mel magnitude to the scaled log range: natural log with floor
/// [`MEL_FLOOR`], then the fixed affine map from `[ln MEL_FLOOR, ln MEL_CEIL]`
/// onto `[-4, 4]`, clamped.
pub fn scale_log_mel(magnitude: f64) -> f64 {
    let (lo, hi) = (MEL_FLOOR.ln(), MEL_CEIL.ln());
    let (out_lo, out_hi) = MEL_RANGE;
    let x = magnitude.max(MEL_FLOOR).ln();
    (out_lo + (x - lo) * (out_hi - out_lo) / (hi - lo)).clamp(out_lo, out_hi)
}

/// Scaled log-mel spectrogram, `n_frames x n_mels`, every cell in `[-4, 4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f64>,
    n_frames: usize,
    n_mels: usize,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_mels..(i + 1) * self.n_mels]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_mels)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// One row per frame, one column per mel band, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for frame in self.frames() {
            let row: Vec<String> = frame.iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Reads the [`MelSpectrogram::to_csv`] layout; every row must have the
    /// same width and every cell must lie in the scaled range.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut n_mels = 0;
        let mut n_frames = 0;
        for line in text.lines().filter(|l| !l.is_empty()) {
            let row: Vec<f64> = line
                .split(',')
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Parse(format!("mel row {}: {e}", n_frames + 1)))?;
            if n_frames == 0 {
                n_mels = row.len();
            } else if row.len() != n_mels {
                return Err(Error::Parse(format!(
                    "mel row {} has {} columns, expected {n_mels}",
                    n_frames + 1,
                    row.len()
                )));
            }
            if row.iter().any(|v| !(MEL_RANGE.0..=MEL_RANGE.1).contains(v)) {
                return Err(Error::Parse(format!(
                    "mel row {} leaves the scaled range",
                    n_frames + 1
                )));
            }
            data.extend(row);
            n_frames += 1;
        }
        Ok(Self {
            data,
            n_frames,
            n_mels,
        })
    }
}

/// Log-mel spectrogram with the same framing as [`rms_contour`].
pub fn log_mel(audio: &AudioBuffer, spec: FrameSpec, n_mels: usize) -> Result<MelSpectrogram> {
    if n_mels < 1 {
        return Err(Error::invalid("n_mels must be at least 1"));
    }
    let n_frames = spec.require_frames(audio.len())?;
    let stft = Stft::new(spec.window_len());
    let bank = MelFilterbank::new(n_mels, stft.n_fft(), audio.sample_rate_hz())?;
    let mut data = Vec::with_capacity(n_frames * n_mels);
    for frame in spec.frames(audio.samples()) {
        let mags = stft.magnitudes(frame);
        data.extend(bank.apply(&mags).into_iter().map(scale_log_mel));
    }
    Ok(MelSpectrogram {
        data,
        n_frames,
        n_mels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn buffer(samples: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(samples, 16_000).unwrap()
    }

    #[test]
    fn rms_of_constant_signal() {
        let spec = FrameSpec::new(100, 30).unwrap();
        let c = rms_contour(&buffer(vec![0.5; 1000]), spec).unwrap();
        assert_eq!(c.len(), 1 + (1000 - 100) / 30);
        assert!(c.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn rms_of_full_period_sine() {
        // 800-sample window holds exactly 10 periods of 200 Hz at 16 kHz.
        let samples = (0..16_000)
            .map(|i| (2.0 * PI * 200.0 * i as f64 / 16_000.0).sin())
            .collect();
        let c = rms_contour(&buffer(samples), FrameSpec::new(800, 200).unwrap()).unwrap();
        assert_eq!(c.len(), 77);
        for v in c.values() {
            assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
        }
    }

    #[test]
    fn rms_too_short_is_rejected() {
        let err = rms_contour(&buffer(vec![0.1; 799]), FrameSpec::new(800, 200).unwrap());
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn silence_maps_to_range_minimum() {
        let mel = log_mel(
            &buffer(vec![0.0; 16_000]),
            FrameSpec::default_for_rate(16_000),
            80,
        )
        .unwrap();
        assert_eq!((mel.n_frames(), mel.n_mels()), (77, 80));
        assert!(mel.as_slice().iter().all(|&v| v == -4.0));
    }

    #[test]
    fn n_mels_zero_is_rejected() {
        let err = log_mel(
            &buffer(vec![0.0; 1000]),
            FrameSpec::new(800, 200).unwrap(),
            0,
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn log_scale_is_clamped_and_monotone() {
        assert_eq!(scale_log_mel(0.0), -4.0);
        assert_eq!(scale_log_mel(1e6), 4.0);
        assert!((scale_log_mel(MEL_CEIL) - 4.0).abs() < 1e-12);
        assert!(scale_log_mel(0.01) < scale_log_mel(0.1));
    }

    #[test]
    fn filterbank_rows_have_unit_area() {
        let bank = MelFilterbank::new(80, 1024, 16_000).unwrap();
        let bin_hz = 16_000.0 / 1024.0;
        let centers = bank.center_frequencies();
        assert_eq!(centers.len(), 80);
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        assert!(*centers.last().unwrap() < 8000.0);
        // Riemann sum of each triangle over the FFT grid; skip the narrow
        // low bands that span only a couple of bins.
        for (m, row) in bank.weights.iter().enumerate().skip(20) {
            let area: f64 = row.iter().sum::<f64>() * bin_hz;
            assert!((area - 1.0).abs() < 0.05, "filter {m} area {area}");
        }
    }
}
