//! Frame geometry and per-frame contours, with the contour CSV format
//! `frame,time_s,value,voiced`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analysis window and hop, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    window_len: usize,
    hop_len: usize,
}

impl FrameSpec {
    pub const DEFAULT_WINDOW_MS: f64 = 50.0;
    pub const DEFAULT_HOP_MS: f64 = 12.5;

    pub fn new(window_len: usize, hop_len: usize) -> Result<Self> {
        if window_len == 0 || hop_len == 0 {
            return Err(Error::invalid("window and hop must be positive"));
        }
        if hop_len > window_len {
            return Err(Error::invalid(format!(
                "hop {hop_len} exceeds window {window_len}"
            )));
        }
        Ok(Self {
            window_len,
            hop_len,
        })
    }

    /// Builds a spec from durations, rounding each to the nearest sample.
    pub fn from_ms(window_ms: f64, hop_ms: f64, sample_rate_hz: u32) -> Result<Self> {
        if !(window_ms > 0.0 && hop_ms > 0.0) {
            return Err(Error::invalid("window and hop durations must be positive"));
        }
        let rate = sample_rate_hz as f64;
        Self::new(
            (window_ms * 1e-3 * rate).round() as usize,
            (hop_ms * 1e-3 * rate).round() as usize,
        )
    }

    /// 50 ms window, 12.5 ms hop.
    pub fn default_for_rate(sample_rate_hz: u32) -> Self {
        Self::from_ms(
            Self::DEFAULT_WINDOW_MS,
            Self::DEFAULT_HOP_MS,
            sample_rate_hz,
        )
        .expect("default frame spec is valid for any positive rate")
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop_len(&self) -> usize {
        self.hop_len
    }

    /// `1 + floor((n - window) / hop)` fully contained frames, or 0 when the
    /// signal is shorter than one window.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.window_len {
            0
        } else {
            1 + (n_samples - self.window_len) / self.hop_len
        }
    }

    /// Iterates over the fully contained frames of `samples`, left-aligned
    /// at sample 0 with no padding.
    pub fn frames<'a>(&self, samples: &'a [f64]) -> impl Iterator<Item = &'a [f64]> + 'a {
        let (w, h) = (self.window_len, self.hop_len);
        (0..self.n_frames(samples.len())).map(move |i| &samples[i * h..i * h + w])
    }

    pub(crate) fn require_frames(&self, n_samples: usize) -> Result<usize> {
        match self.n_frames(n_samples) {
            0 => Err(Error::invalid(format!(
                "audio of {n_samples} samples is shorter than one {}-sample window",
                self.window_len
            ))),
            n => Ok(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContourKind {
    LogF0,
    Rms,
}

/// A per-frame time series. Pitch contours carry a voicing mask and store
/// natural-log F0, with exactly 0 at unvoiced frames. RMS contours are
/// non-negative linear amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    values: Vec<f64>,
    kind: ContourKind,
    voicing: Option<Vec<bool>>,
    frame_spec: FrameSpec,
    sample_rate_hz: u32,
}

impl Contour {
    pub fn rms(values: Vec<f64>, frame_spec: FrameSpec, sample_rate_hz: u32) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("RMS values must be finite and non-negative"));
        }
        Ok(Self {
            values,
            kind: ContourKind::Rms,
            voicing: None,
            frame_spec,
            sample_rate_hz,
        })
    }

    /// Builds a log-F0 contour. Values at unvoiced frames are forced to 0;
    /// voiced frames must carry a finite, non-zero log frequency.
    pub fn log_f0(
        mut values: Vec<f64>,
        voicing: Vec<bool>,
        frame_spec: FrameSpec,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        if values.len() != voicing.len() {
            return Err(Error::invalid(format!(
                "{} values but {} voicing flags",
                values.len(),
                voicing.len()
            )));
        }
        for (v, &voiced) in values.iter_mut().zip(&voicing) {
            if !voiced {
                *v = 0.0;
            } else if !v.is_finite() || *v == 0.0 {
                return Err(Error::invalid(
                    "voiced frames need a finite non-zero log-F0",
                ));
            }
        }
        Ok(Self {
            values,
            kind: ContourKind::LogF0,
            voicing: Some(voicing),
            frame_spec,
            sample_rate_hz,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ContourKind {
        self.kind
    }

    pub fn voicing(&self) -> Option<&[bool]> {
        self.voicing.as_deref()
    }

    pub fn frame_spec(&self) -> FrameSpec {
        self.frame_spec
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Frame start time in seconds.
    pub fn frame_time_s(&self, frame: usize) -> f64 {
        (frame * self.frame_spec.hop_len) as f64 / self.sample_rate_hz as f64
    }

    /// Values of voiced frames only (all frames for an RMS contour).
    pub fn voiced_values(&self) -> Vec<f64> {
        match &self.voicing {
            Some(mask) => self
                .values
                .iter()
                .zip(mask)
                .filter(|(_, &v)| v)
                .map(|(x, _)| *x)
                .collect(),
            None => self.values.clone(),
        }
    }

    pub fn n_voiced(&self) -> usize {
        match &self.voicing {
            Some(mask) => mask.iter().filter(|&&v| v).count(),
            None => self.values.len(),
        }
    }

    pub fn same_geometry(&self, other: &Contour) -> bool {
        self.len() == other.len()
            && self.frame_spec == other.frame_spec
            && self.sample_rate_hz == other.sample_rate_hz
    }

    /// Serializes as CSV with header `frame,time_s,value,voiced`. The voiced
    /// column holds 0/1 for pitch contours and is empty for RMS contours.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,time_s,value,voiced\n");
        for (i, v) in self.values.iter().enumerate() {
            let voiced = match &self.voicing {
                Some(mask) => {
                    if mask[i] {
                        "1"
                    } else {
                        "0"
                    }
                }
                None => "",
            };
            writeln!(out, "{i},{},{v},{voiced}", self.frame_time_s(i)).unwrap();
        }
        out
    }

    /// Parses the CSV written by [`Contour::to_csv`]. Frame geometry is not
    /// stored in the file, so the caller supplies it; the hop is checked
    /// against the time column.
    pub fn from_csv(text: &str, frame_spec: FrameSpec, sample_rate_hz: u32) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("frame,time_s,value,voiced") => {}
            other => return Err(Error::Parse(format!("unexpected contour header {other:?}"))),
        }
        let mut values = Vec::new();
        let mut voicing = Vec::new();
        let mut any_voicing = None;
        for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |what: &str| Error::Parse(format!("contour line {}: {what}", lineno + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let frame: usize = cols[0].parse().map_err(|_| bad("bad frame index"))?;
            if frame != values.len() {
                return Err(bad("frames out of order"));
            }
            let time: f64 = cols[1].parse().map_err(|_| bad("bad time"))?;
            let expected = (frame * frame_spec.hop_len) as f64 / sample_rate_hz as f64;
            if (time - expected).abs() > 1e-9 {
                return Err(bad("time does not match frame geometry"));
            }
            values.push(cols[2].parse::<f64>().map_err(|_| bad("bad value"))?);
            let has_voicing = !cols[3].is_empty();
            if *any_voicing.get_or_insert(has_voicing) != has_voicing {
                return Err(bad("voiced column must be all filled or all empty"));
            }
            if has_voicing {
                voicing.push(match cols[3] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad("voiced must be 0 or 1")),
                });
            }
        }
        if any_voicing == Some(true) {
            Self::log_f0(values, voicing, frame_spec, sample_rate_hz)
        } else {
            Self::rms(values, frame_spec, sample_rate_hz)
        }
    }
}
