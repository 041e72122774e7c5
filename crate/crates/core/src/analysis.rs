//! One-call prosody analysis of an utterance: resample, track pitch, measure
//! RMS and summarize.

use serde::{Deserialize, Serialize};

use crate::audio::{resample, AudioBuffer, DEFAULT_SAMPLE_RATE};
use crate::contour::{Contour, FrameSpec};
use crate::dsp::rms_contour;
use crate::error::Result;
use crate::features::{extract_gs, GsFeatures};
use crate::pitch::{track_pitch, PitchConfig};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub sample_rate_hz: u32,
    pub frame_spec: FrameSpec,
    pub pitch: PitchConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            frame_spec: FrameSpec::default_for_rate(DEFAULT_SAMPLE_RATE),
            pitch: PitchConfig::default(),
        }
    }
}

/// Both contours of an utterance and, when it has voiced frames, its GS
/// features.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub f0: Contour,
    pub rms: Contour,
    pub gs: Option<GsFeatures>,
}

impl Analysis {
    pub fn gs(&self) -> Result<&GsFeatures> {
        self.gs.as_ref().ok_or(Error::NoVoicing)
    }
}

/// Analyzes `audio`, resampling it to the configured rate first if needed.
pub fn analyze(audio: &AudioBuffer, cfg: &AnalysisConfig) -> Result<Analysis> {
    let resampled;
    let audio = if audio.sample_rate_hz() == cfg.sample_rate_hz {
        audio
    } else {
        resampled = resample(audio, cfg.sample_rate_hz)?;
        &resampled
    };
    let f0 = track_pitch(audio, cfg.frame_spec, &cfg.pitch)?;
    let rms = rms_contour(audio, cfg.frame_spec)?;
    let gs = match extract_gs(&f0, &rms) {
        Ok(gs) => Some(gs),
        Err(Error::NoVoicing) => None,
        Err(e) => return Err(e),
    };
    Ok(Analysis { f0, rms, gs })
}
