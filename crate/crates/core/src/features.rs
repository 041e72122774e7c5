//! Global-summary (GS) prosody features: seven utterance-level statistics of
//! the log-F0 and RMS contours, and their corpus z-normalization.

use std::fmt::Write as _;
use std::ops::Index;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contour::{Contour, ContourKind};
use crate::error::{Error, Result};

pub const GS_DIM: usize = 7;

/// Column names, in the fixed public dimension order.
pub const GS_NAMES: [&str; GS_DIM] = [
    "f0_mean", "f0_var", "f0_max", "f0_min", "rms_mean", "rms_var", "rms_max",
];

/// Dimensions describing pitch (log-Hz).
pub const PITCH_DIMS: std::ops::Range<usize> = 0..4;
/// Dimensions describing loudness (linear amplitude).
pub const RMS_DIMS: std::ops::Range<usize> = 4..7;

/// Floor applied to fitted standard deviations.
pub const STD_EPSILON: f64 = 1e-8;

/// `[f0_mean, f0_var, f0_max, f0_min, rms_mean, rms_var, rms_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GsFeatures([f64; GS_DIM]);

impl GsFeatures {
    /// Wraps a raw vector, checking the ordering and sign invariants.
    pub fn new(values: [f64; GS_DIM]) -> Result<Self> {
        let [f0_mean, f0_var, f0_max, f0_min, rms_mean, rms_var, rms_max] = values;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("GS features must be finite"));
        }
        if f0_var < 0.0 || rms_var < 0.0 {
            return Err(Error::invalid("GS variances must be non-negative"));
        }
        if !(f0_min <= f0_mean && f0_mean <= f0_max && rms_mean <= rms_max) {
            return Err(Error::invalid("GS features violate min <= mean <= max"));
        }
        Ok(Self(values))
    }

    pub fn as_array(&self) -> &[f64; GS_DIM] {
        &self.0
    }

    pub fn f0_mean(&self) -> f64 {
        self.0[0]
    }

    pub fn rms_mean(&self) -> f64 {
        self.0[4]
    }
}

impl Index<usize> for GsFeatures {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Population mean and variance of a non-empty slice. The mean is clamped to
/// the sample range so that summation rounding can never push it past the
/// extremes (e.g. a constant contour).
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = (xs.iter().sum::<f64>() / n).clamp(min_of(xs), max_of(xs));
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Pitch statistics use voiced frames only; RMS statistics use every frame.
/// Variances are population variances.
pub fn extract_gs(f0: &Contour, rms: &Contour) -> Result<GsFeatures> {
    if f0.kind() != ContourKind::LogF0 || rms.kind() != ContourKind::Rms {
        return Err(Error::invalid(
            "extract_gs expects a log-F0 and an RMS contour",
        ));
    }
    if !f0.same_geometry(rms) {
        return Err(Error::invalid(format!(
            "contour geometry mismatch ({} vs {} frames)",
            f0.len(),
            rms.len()
        )));
    }
    let voiced = f0.voiced_values();
    if voiced.is_empty() {
        return Err(Error::NoVoicing);
    }
    if rms.is_empty() {
        return Err(Error::invalid("empty RMS contour"));
    }
    let (f0_mean, f0_var) = mean_var(&voiced);
    let (rms_mean, rms_var) = mean_var(rms.values());
    GsFeatures::new([
        f0_mean,
        f0_var,
        max_of(&voiced),
        min_of(&voiced),
        rms_mean,
        rms_var,
        max_of(rms.values()),
    ])
}

/// Per-dimension corpus mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; GS_DIM],
    pub std: [f64; GS_DIM],
    /// Where the statistics were fitted (corpus file, utterance count).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl NormStats {
    pub fn normalize(&self, v: &GsFeatures) -> [f64; GS_DIM] {
        std::array::from_fn(|d| (v.0[d] - self.mean[d]) / self.std[d])
    }

    /// Inverse of [`NormStats::normalize`].
    pub fn denormalize(&self, z: &[f64; GS_DIM]) -> [f64; GS_DIM] {
        std::array::from_fn(|d| z[d] * self.std[d] + self.mean[d])
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("NormStats serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stats: NormStats = serde_json::from_str(text)?;
        if stats.std.iter().any(|&s| !(s >= STD_EPSILON))
            || stats.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Parse(
                "normalization std below epsilon or non-finite mean".into(),
            ));
        }
        Ok(stats)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Fits [`NormStats`] over a non-empty corpus; each std is floored at
/// [`STD_EPSILON`].
pub fn fit_norm_stats(corpus: &[GsFeatures]) -> Result<NormStats> {
    if corpus.is_empty() {
        return Err(Error::invalid(
            "cannot fit normalization on an empty corpus",
        ));
    }
    let mut mean = [0.0; GS_DIM];
    let mut std = [0.0; GS_DIM];
    for d in 0..GS_DIM {
        let column: Vec<f64> = corpus.iter().map(|v| v.0[d]).collect();
        let (m, var) = mean_var(&column);
        mean[d] = m;
        std[d] = var.sqrt().max(STD_EPSILON);
    }
    Ok(NormStats {
        mean,
        std,
        source: None,
    })
}

/// Standard z-normalization with fitted statistics.
pub fn normalize(v: &GsFeatures, stats: &NormStats) -> [f64; GS_DIM] {
    stats.normalize(v)
}

/// One labelled row of a GS corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct GsRecord {
    pub source: String,
    pub features: GsFeatures,
}

/// Writes the GS corpus CSV: a header row, then for each utterance a
/// `# <source>` comment line followed by its feature row.
pub fn write_gs_csv(records: &[GsRecord]) -> String {
    let mut out = GS_NAMES.join(",");
    out.push('\n');
    for r in records {
        writeln!(out, "# {}", r.source).unwrap();
        let row: Vec<String> = r.features.0.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_gs_csv(text: &str) -> Result<Vec<GsRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty GS file".into()))?;
    if header != GS_NAMES.join(",") {
        return Err(Error::Parse(format!("unexpected GS header {header:?}")));
    }
    let mut out = Vec::new();
    let mut pending: Option<String> = None;
    for line in lines {
        if let Some(comment) = line.strip_prefix('#') {
            pending = Some(comment.trim().to_string());
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Parse(format!("GS row {line:?}: {e}")))?;
        let values: [f64; GS_DIM] = values
            .try_into()
            .map_err(|_| Error::Parse(format!("GS row {line:?} needs {GS_DIM} columns")))?;
        let source = pending
            .take()
            .unwrap_or_else(|| format!("row{}", out.len()));
        out.push(GsRecord {
            source,
            features: GsFeatures::new(values)?,
        });
    }
    Ok(out)
}
