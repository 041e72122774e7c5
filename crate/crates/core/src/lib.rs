//! Prosody analysis and prosody-transfer evaluation built on global summary
//! (GS) statistics.
//!
//! The pipeline turns an utterance into two frame-aligned contours, a
//! smoothed log-F0 track ([`pitch::track_pitch`]) and an RMS loudness track
//! ([`dsp::rms_contour`]), and summarizes them into seven numbers
//! ([`features::extract_gs`]): mean, variance, maximum and minimum of
//! log-F0 over voiced frames, and mean, variance and maximum of RMS.
//!
//! [`metrics`] compares a reference with a synthesized candidate through
//! cosine distances between normalized GS sub-vectors and DTW distances
//! between contours, and aggregates them over seeded Monte Carlo runs.
//! [`conditioning`] reproduces the conditioning mechanism (a linear map
//! from GS features added to every text-encoder state) inside a small
//! trainable model with verified gradients.
//!
//! ```
//! use prosody_gs::{analysis::{analyze, AnalysisConfig}, synth};
//!
//! let audio = synth::tone(220.0, 1.0, 0.5, 16_000);
//! let a = analyze(&audio, &AnalysisConfig::default()).unwrap();
//! let gs = a.gs().unwrap();
//! assert!((gs.f0_mean() - 220f64.ln()).abs() < 0.02);
//! ```

pub mod analysis;
pub mod audio;
pub mod conditioning;
pub mod contour;
pub mod dsp;
mod error;
pub mod features;
pub mod metrics;
pub mod pitch;
pub mod projection;
pub mod synth;

pub use audio::AudioBuffer;
pub use contour::{Contour, ContourKind, FrameSpec};
pub use error::{Error, Result};
pub use features::{GsFeatures, NormStats};
pub use metrics::{MetricReport, PairMetrics};

/// The guide in `book/` is compiled here so its snippets run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/framing.md")]
    mod framing {}
    #[doc = include_str!("../../../book/src/pitch.md")]
    mod pitch {}
    #[doc = include_str!("../../../book/src/gs-features.md")]
    mod gs_features {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/conditioning.md")]
    mod conditioning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
