//! Deterministic test signals: tones, chirps and harmonic "utterances" with
//! controllable pitch and loudness contours.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::metrics::PairsProvider;

pub fn tone(freq_hz: f64, seconds: f64, amplitude: f64, sample_rate_hz: u32) -> AudioBuffer {
    let n = (seconds * sample_rate_hz as f64).round() as usize;
    let w = 2.0 * PI * freq_hz / sample_rate_hz as f64;
    let samples = (0..n).map(|i| amplitude * (w * i as f64).sin()).collect();
    AudioBuffer::new(samples, sample_rate_hz).expect("finite tone")
}

pub fn silence(seconds: f64, sample_rate_hz: u32) -> AudioBuffer {
    let n = (seconds * sample_rate_hz as f64).round() as usize;
    AudioBuffer::new(vec![0.0; n], sample_rate_hz).expect("finite silence")
}

/// Linear chirp from `f_start` to `f_end` Hz; the instantaneous frequency
/// at time `t` is `f_start + (f_end - f_start) * t / seconds`.
pub fn linear_chirp(
    f_start: f64,
    f_end: f64,
    seconds: f64,
    amplitude: f64,
    sample_rate_hz: u32,
) -> AudioBuffer {
    let n = (seconds * sample_rate_hz as f64).round() as usize;
    let rate = sample_rate_hz as f64;
    let k = (f_end - f_start) / seconds;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            amplitude * (2.0 * PI * (f_start * t + 0.5 * k * t * t)).sin()
        })
        .collect();
    AudioBuffer::new(samples, sample_rate_hz).expect("finite chirp")
}

/// Harmonic signal following per-sample frequency and amplitude tracks.
/// Phase is accumulated so frequency changes are continuous. Harmonic `h`
/// has relative weight `1 / h`; harmonics above 0.45 x rate are dropped.
pub fn harmonic_from_tracks(
    freq_hz: &[f64],
    amplitude: &[f64],
    n_harmonics: usize,
    sample_rate_hz: u32,
) -> AudioBuffer {
    assert_eq!(freq_hz.len(), amplitude.len());
    let rate = sample_rate_hz as f64;
    let norm: f64 = (1..=n_harmonics).map(|h| 1.0 / h as f64).sum();
    let mut phase = 0.0;
    let samples = freq_hz
        .iter()
        .zip(amplitude)
        .map(|(&f, &a)| {
            let s: f64 = (1..=n_harmonics)
                .filter(|&h| h as f64 * f < 0.45 * rate)
                .map(|h| (h as f64 * phase).sin() / h as f64)
                .sum();
            phase = (phase + 2.0 * PI * f / rate) % (2.0 * PI);
            a * s / norm
        })
        .collect();
    AudioBuffer::new(samples, sample_rate_hz).expect("finite harmonic signal")
}

/// Parameters of a two-family synthetic prosody corpus: a high-pitched,
/// loud family and a low-pitched, quiet one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyProfile {
    /// Range of the utterance's base F0, in Hz.
    pub f0_hz: (f64, f64),
    /// Range of the peak amplitude.
    pub amplitude: (f64, f64),
}

impl FamilyProfile {
    pub const HIGH_LOUD: FamilyProfile = FamilyProfile {
        f0_hz: (200.0, 260.0),
        amplitude: (0.3, 0.5),
    };
    pub const LOW_QUIET: FamilyProfile = FamilyProfile {
        f0_hz: (95.0, 130.0),
        amplitude: (0.04, 0.08),
    };
}

/// A speech-like utterance: 3 to 5 voiced "syllables" separated by short
/// pauses, with a declining pitch line, per-syllable pitch accents and
/// raised-cosine loudness envelopes. Fully determined by `seed`.
pub fn prosodic_utterance(profile: &FamilyProfile, seed: u64, sample_rate_hz: u32) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = sample_rate_hz as f64;
    let base = rng.random_range(profile.f0_hz.0..profile.f0_hz.1);
    let peak = rng.random_range(profile.amplitude.0..profile.amplitude.1);
    let n_syllables = rng.random_range(3..=5);
    let declination = rng.random_range(0.0..0.15);

    let mut freq = Vec::new();
    let mut amp = Vec::new();
    let lead = (rng.random_range(0.05..0.12) * rate) as usize;
    freq.extend(std::iter::repeat_n(base, lead));
    amp.extend(std::iter::repeat_n(0.0, lead));
    for s in 0..n_syllables {
        let len = (rng.random_range(0.18..0.32) * rate) as usize;
        let accent = rng.random_range(-0.08..0.12);
        let level = peak * rng.random_range(0.6..1.0);
        let progress = s as f64 / n_syllables as f64;
        for i in 0..len {
            let x = i as f64 / len as f64;
            let f = base * (1.0 - declination * progress) * (1.0 + accent * (PI * x).sin());
            freq.push(f);
            amp.push(level * (0.5 - 0.5 * (2.0 * PI * x).cos()).sqrt());
        }
        let gap = (rng.random_range(0.04..0.1) * rate) as usize;
        let last = *freq.last().unwrap();
        freq.extend(std::iter::repeat_n(last, gap));
        amp.extend(std::iter::repeat_n(0.0, gap));
    }
    harmonic_from_tracks(&freq, &amp, 6, sample_rate_hz)
}

/// One of the two prosody families of the demonstration corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    HighLoud,
    LowQuiet,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::HighLoud, Family::LowQuiet];

    pub fn profile(self) -> FamilyProfile {
        match self {
            Family::HighLoud => FamilyProfile::HIGH_LOUD,
            Family::LowQuiet => FamilyProfile::LOW_QUIET,
        }
    }

    pub fn other(self) -> Family {
        match self {
            Family::HighLoud => Family::LowQuiet,
            Family::LowQuiet => Family::HighLoud,
        }
    }

    /// Short name used in utterance ids.
    pub fn name(self) -> &'static str {
        match self {
            Family::HighLoud => "high",
            Family::LowQuiet => "low",
        }
    }
}

/// SplitMix64 finalizer, used to derive independent per-utterance seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ p))
}

/// A seeded two-family corpus standing in for a prosody-transfer system.
///
/// References are `high_NN` and `low_NN` utterances. The candidate for a
/// `(text, reference)` pair is a fresh utterance drawn either from the
/// reference's own family (a system that transfers prosody) or from the
/// other family (one that does not). All audio is generated on demand and is
/// a pure function of the ids and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFamilyCorpus {
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub references: Vec<(String, Family)>,
    pub texts: Vec<String>,
}

impl TwoFamilyCorpus {
    pub fn new(per_family: usize, n_texts: usize, seed: u64, sample_rate_hz: u32) -> Result<Self> {
        if per_family == 0 || n_texts == 0 {
            return Err(Error::invalid(
                "need at least one reference per family and one text",
            ));
        }
        if sample_rate_hz < 8000 {
            return Err(Error::invalid(
                "two-family corpus needs a sample rate of at least 8 kHz",
            ));
        }
        let references = Family::ALL
            .iter()
            .flat_map(|&f| (0..per_family).map(move |i| (format!("{}_{i:02}", f.name()), f)))
            .collect();
        let texts = (0..n_texts).map(|i| format!("text_{i:02}")).collect();
        Ok(Self {
            seed,
            sample_rate_hz,
            references,
            texts,
        })
    }

    pub fn reference_ids(&self) -> Vec<String> {
        self.references.iter().map(|(id, _)| id.clone()).collect()
    }

    fn reference_index(&self, id: &str) -> Result<usize> {
        self.references
            .iter()
            .position(|(r, _)| r == id)
            .ok_or_else(|| Error::invalid(format!("unknown reference {id:?}")))
    }

    fn text_index(&self, id: &str) -> Result<usize> {
        self.texts
            .iter()
            .position(|t| t == id)
            .ok_or_else(|| Error::invalid(format!("unknown text {id:?}")))
    }

    pub fn family_of(&self, reference_id: &str) -> Option<Family> {
        self.references
            .iter()
            .find(|(r, _)| r == reference_id)
            .map(|(_, f)| *f)
    }

    pub fn reference_audio(&self, reference_id: &str) -> Result<AudioBuffer> {
        let i = self.reference_index(reference_id)?;
        let family = self.references[i].1;
        Ok(prosodic_utterance(
            &family.profile(),
            derive_seed(self.seed, &[0, i as u64]),
            self.sample_rate_hz,
        ))
    }

    /// The candidate for `text_id` given `reference_id`: drawn from the
    /// reference's family when `matched`, otherwise from the other family.
    pub fn candidate_audio(
        &self,
        text_id: &str,
        reference_id: &str,
        matched: bool,
    ) -> Result<AudioBuffer> {
        let t = self.text_index(text_id)?;
        let r = self.reference_index(reference_id)?;
        let family = if matched {
            self.references[r].1
        } else {
            self.references[r].1.other()
        };
        Ok(prosodic_utterance(
            &family.profile(),
            derive_seed(self.seed, &[1 + matched as u64, t as u64, r as u64]),
            self.sample_rate_hz,
        ))
    }

    /// Every utterance of the corpus with a path-like id: references as
    /// `references/<reference>`, candidates as
    /// `candidates/matched_<text>__<reference>` and
    /// `candidates/mismatched_<text>__<reference>`. File stems are unique.
    /// Normalization statistics should be fitted over all of them.
    pub fn utterances(&self) -> Result<Vec<(String, AudioBuffer)>> {
        let mut out = Vec::new();
        for (id, _) in &self.references {
            out.push((format!("references/{id}"), self.reference_audio(id)?));
        }
        for (dir, matched) in [("matched", true), ("mismatched", false)] {
            for text in &self.texts {
                for (r, _) in &self.references {
                    out.push((
                        format!("candidates/{dir}_{text}__{r}"),
                        self.candidate_audio(text, r, matched)?,
                    ));
                }
            }
        }
        Ok(out)
    }

    /// A Monte Carlo pairs provider over this corpus.
    pub fn provider(&self, matched: bool) -> TwoFamilyProvider<'_> {
        TwoFamilyProvider {
            corpus: self,
            matched,
        }
    }
}

/// [`PairsProvider`] view of a [`TwoFamilyCorpus`].
#[derive(Debug, Clone, Copy)]
pub struct TwoFamilyProvider<'a> {
    corpus: &'a TwoFamilyCorpus,
    matched: bool,
}

impl PairsProvider for TwoFamilyProvider<'_> {
    fn reference(&self, reference_id: &str) -> Result<AudioBuffer> {
        self.corpus.reference_audio(reference_id)
    }

    fn candidate(&self, text_id: &str, reference_id: &str) -> Result<AudioBuffer> {
        self.corpus
            .candidate_audio(text_id, reference_id, self.matched)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_follow_duration() {
        assert_eq!(tone(220.0, 2.0, 0.5, 16_000).len(), 32_000);
        assert_eq!(silence(0.5, 16_000).len(), 8000);
        assert_eq!(linear_chirp(100.0, 200.0, 1.0, 0.5, 8000).len(), 8000);
    }

    #[test]
    fn utterances_are_deterministic_and_bounded() {
        let a = prosodic_utterance(&FamilyProfile::HIGH_LOUD, 3, 16_000);
        let b = prosodic_utterance(&FamilyProfile::HIGH_LOUD, 3, 16_000);
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|s| s.abs() <= 0.5));
        assert_ne!(a, prosodic_utterance(&FamilyProfile::HIGH_LOUD, 4, 16_000));
    }
}
